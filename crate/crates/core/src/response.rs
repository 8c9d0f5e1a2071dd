//! Lehmann correlators, Lorentzian kernels, absorptive parts and optical weights.
//!
//! Optical coefficients f and h follow the wave-packet conductivity of the
//! slowest decaying band n:
//!
//! sigma^reg(omega) = sum_m [ i(e_n - e_m) f / (z - omega) + c.c.(omega -> -omega) ]
//!                  + i omega [ h / (z - omega)^2 + c.c.(omega -> -omega) ],  z = e_m - e_n.
//!
//! Its omega integral in closed form uses the principal logarithm with the
//! endpoint arg = -pi on the negative real axis.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{derivatives, locked_eigensystem, map_mesh, record_from_eigensystem, unit_gauge, Tensor2};
use crate::models::{BlochModel, CMat, Direction, KPoint};
use crate::numeric::{compensated_sum, integrate, Quadrature};
use crate::spectra::{eigensystem, BandOrdering, Eigensystem};
use crate::topology::chern_plaquette;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Step for the derivative of the interband amplitude inside f.
pub const AMPLITUDE_FD_STEP: f64 = 1e-4;

/// Upper quadrature limit in units of the largest |energy|.
pub const OMEGA_MAX_FACTOR: f64 = 50.0;

/// Band energies split as e_n = E_n + S'_n - i S''_n with operator matrix elements.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    pub energies: Vec<f64>,
    pub sigma_prime: Vec<f64>,
    pub sigma_dd: Vec<f64>,
    /// O^i_{nm} for the two operators.
    pub operators: [CMat; 2],
}

impl TransitionTable {
    pub fn new(energies: Vec<f64>, sigma_prime: Vec<f64>, sigma_dd: Vec<f64>, operators: [CMat; 2]) -> Result<Self> {
        let n = energies.len();
        if sigma_prime.len() != n || sigma_dd.len() != n {
            return Err(Error::InvalidParams("self-energy lists must match the band count".into()));
        }
        if operators.iter().any(|o| o.nrows() != n || o.ncols() != n) {
            return Err(Error::InvalidParams("operator matrices must be N x N".into()));
        }
        Ok(TransitionTable { energies, sigma_prime, sigma_dd, operators })
    }

    /// Biorthogonal elements <L_n|O|R_m>; E = Re e, S'' = -Im e, S' = 0.
    pub fn from_eigensystem(es: &Eigensystem, ops: &[CMat; 2]) -> Result<Self> {
        let proj = |o: &CMat| es.left.adjoint() * o * &es.right;
        TransitionTable::new(
            es.energies.iter().map(|e| e.re).collect(),
            vec![0.0; es.dim()],
            es.energies.iter().map(|e| -e.im).collect(),
            [proj(&ops[0]), proj(&ops[1])],
        )
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn e_nm(&self, n: usize, m: usize) -> f64 {
        self.energies[n] - self.energies[m]
    }

    pub fn sigma_prime_nm(&self, n: usize, m: usize) -> f64 {
        self.sigma_prime[n] - self.sigma_prime[m]
    }

    /// S''_nm = S''_n + S''_m.
    pub fn sigma_dd_nm(&self, n: usize, m: usize) -> f64 {
        self.sigma_dd[n] + self.sigma_dd[m]
    }
}

/// Diagonal density weights in the eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityWeights {
    Projector { band: usize },
    Thermal { beta: f64 },
}

impl Default for DensityWeights {
    fn default() -> Self {
        DensityWeights::Projector { band: 0 }
    }
}

impl DensityWeights {
    pub fn weights(&self, energies: &[f64]) -> Result<Vec<f64>> {
        match *self {
            DensityWeights::Projector { band } => {
                if band >= energies.len() {
                    return Err(Error::InvalidParams(format!("band {band} out of range")));
                }
                Ok((0..energies.len()).map(|n| if n == band { 1.0 } else { 0.0 }).collect())
            }
            DensityWeights::Thermal { beta } => {
                if !(beta >= 0.0 && beta.is_finite()) {
                    return Err(Error::InvalidParams("beta must be finite and nonnegative".into()));
                }
                let emin = energies.iter().copied().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - emin)).exp()).collect();
                let z: f64 = w.iter().sum();
                Ok(w.into_iter().map(|x| x / z).collect())
            }
        }
    }
}

/// Pi_ij(omega) = -sum_nm rho_n O^i_nm O^j_mn / (omega + E_nm + S_nm), S_nm = S'_nm + i S''_nm.
pub fn lehmann_correlator(table: &TransitionTable, rho: &[f64], omega: f64) -> Result<Tensor2> {
    if rho.len() != table.dim() {
        return Err(Error::InvalidParams("density weights must match the band count".into()));
    }
    let mut pi = [[ZERO; 2]; 2];
    for n in 0..table.dim() {
        if rho[n] == 0.0 {
            continue;
        }
        for m in 0..table.dim() {
            let re = omega + table.e_nm(n, m) + table.sigma_prime_nm(n, m);
            let im = table.sigma_dd_nm(n, m);
            if im == 0.0 && re.abs() <= 1e-12 * (1.0 + omega.abs()) {
                return Err(Error::PoleOnAxis { omega });
            }
            let denom = Complex64::new(re, im);
            for i in 0..2 {
                for j in 0..2 {
                    pi[i][j] -= rho[n] * table.operators[i][(n, m)] * table.operators[j][(m, n)] / denom;
                }
            }
        }
    }
    Ok(pi)
}

/// L(omega) = S'' / (pi [(omega + E + S')^2 + S''^2]).
pub fn lorentzian_kernel(e: f64, sigma_prime: f64, sigma_dd: f64, omega: f64) -> f64 {
    let x = omega + e + sigma_prime;
    sigma_dd / (PI * (x * x + sigma_dd * sigma_dd))
}

/// Pi^abs_ij = [Pi_ij - (Pi_ji)^*] / 2i.
pub fn absorptive_part(pi: &Tensor2) -> Tensor2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (pi[i][j] - pi[j][i].conj()) / (2.0 * I);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResponseSpectrum {
    pub omegas: Vec<f64>,
    pub pi: Vec<Tensor2>,
    pub pi_abs: Vec<Tensor2>,
}

pub fn response_spectrum(table: &TransitionTable, rho: &[f64], omegas: &[f64]) -> Result<ResponseSpectrum> {
    let pi = omegas.iter().map(|&w| lehmann_correlator(table, rho, w)).collect::<Result<Vec<_>>>()?;
    let pi_abs = pi.iter().map(absorptive_part).collect();
    Ok(ResponseSpectrum { omegas: omegas.to_vec(), pi, pi_abs })
}

/// Interband coefficients of band n at one k-point, indexed [m][mu][nu].
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalCoefficients {
    pub band: usize,
    pub energies: Vec<Complex64>,
    pub f: Vec<Tensor2>,
    pub h: Vec<Tensor2>,
}

/// X^nu_m = <L_m|d_nu H|R_n> / (e_n - e_m).
fn amplitude(es: &Eigensystem, dh: &[CMat; 2], n: usize, m: usize, nu: usize) -> Complex64 {
    es.l(m).dotc(&(&dh[nu] * es.r(n))) / (es.energies[n] - es.energies[m])
}

/// d_mu R_a in the parallel gauge of unit-norm right vectors.
fn parallel_derivative(es: &Eigensystem, dh: &CMat, a: usize) -> nalgebra::DVector<Complex64> {
    let ra = es.r(a);
    let mut v = nalgebra::DVector::zeros(es.dim());
    for b in (0..es.dim()).filter(|&b| b != a) {
        v += es.r(b) * (es.l(b).dotc(&(dh * &ra)) / (es.energies[a] - es.energies[b]));
    }
    let along = ra.dotc(&v);
    v - ra * along
}

/// Computes f^{nm}_{mu nu} and h^{nm}_{mu nu} for all m != n.
///
/// The derivative of the interband amplitude is a central difference of step
/// `step` in the gauge locked to the unit-norm center vectors.
pub fn optical_coefficients(model: &dyn BlochModel, k: KPoint, band: usize, ordering: BandOrdering, step: f64) -> Result<OpticalCoefficients> {
    let es = unit_gauge(&eigensystem(&model.hamiltonian(k)?, ordering)?);
    let n = band;
    let dim = es.dim();
    if n >= dim {
        return Err(Error::InvalidParams(format!("band {n} out of range")));
    }
    let dh = derivatives(model, k)?;
    let mut stencil = Vec::with_capacity(4);
    for dir in Direction::ALL {
        for s in [step, -step] {
            let kk = k.shifted(dir, s);
            let e = locked_eigensystem(model, kk, &es, ordering)?;
            let d = derivatives(model, kk)?;
            stencil.push((e, d));
        }
    }
    let ir = &es.overlap_right;
    let mut f = vec![[[ZERO; 2]; 2]; dim];
    let mut h = vec![[[ZERO; 2]; 2]; dim];
    for m in (0..dim).filter(|&m| m != n) {
        if (es.energies[n] - es.energies[m]).norm() < crate::spectra::GAP_TOL {
            return Err(Error::ExceptionalPoint { gap: (es.energies[n] - es.energies[m]).norm() });
        }
        for mu in 0..2 {
            let drn = parallel_derivative(&es, &dh[mu], n);
            let drm = parallel_derivative(&es, &dh[mu], m);
            let bracket = drn.dotc(&es.r(m)) - es.r(n).dotc(&drm);
            let de = es.l(n).dotc(&(&dh[mu] * es.r(n))) - es.l(m).dotc(&(&dh[mu] * es.r(m)));
            let (p, q) = (&stencil[2 * mu], &stencil[2 * mu + 1]);
            for nu in 0..2 {
                let x = amplitude(&es, &dh, n, m, nu);
                let dx = (amplitude(&p.0, &p.1, n, m, nu) - amplitude(&q.0, &q.1, n, m, nu)) / (2.0 * step);
                f[m][mu][nu] = (x * bracket - ir[(n, m)] * dx) / (2.0 * ir[(n, n)]);
                h[m][mu][nu] = ir[(n, m)] / (2.0 * ir[(n, n)]) * x * de;
            }
        }
    }
    Ok(OpticalCoefficients { band: n, energies: es.energies.clone(), f, h })
}

pub fn f_coefficient(model: &dyn BlochModel, k: KPoint, n: usize, m: usize, mu: Direction, nu: Direction, ordering: BandOrdering) -> Result<Complex64> {
    if n == m {
        return Err(Error::InvalidParams("f is defined for n != m".into()));
    }
    Ok(optical_coefficients(model, k, n, ordering, AMPLITUDE_FD_STEP)?.f[m][mu.index()][nu.index()])
}

pub fn h_coefficient(model: &dyn BlochModel, k: KPoint, n: usize, m: usize, mu: Direction, nu: Direction, ordering: BandOrdering) -> Result<Complex64> {
    if n == m {
        return Err(Error::InvalidParams("h is defined for n != m".into()));
    }
    Ok(optical_coefficients(model, k, n, ordering, AMPLITUDE_FD_STEP)?.h[m][mu.index()][nu.index()])
}

/// Regular conductivity tensor sigma^reg_{mu nu}(omega).
pub fn conductivity_regular(c: &OpticalCoefficients, omega: f64) -> Tensor2 {
    let n = c.band;
    let mut s = [[ZERO; 2]; 2];
    for m in (0..c.energies.len()).filter(|&m| m != n) {
        let z = c.energies[m] - c.energies[n];
        let w = Complex64::new(omega, 0.0);
        for mu in 0..2 {
            for nu in 0..2 {
                let (f, h) = (c.f[m][mu][nu], c.h[m][mu][nu]);
                s[mu][nu] += -I * z * f / (z - w) + (-I * z * f / (z + w)).conj();
                s[mu][nu] += I * w * (h / ((z - w) * (z - w)) + (h / ((z + w) * (z + w))).conj());
            }
        }
    }
    s
}

/// Second derivatives of e_n (the Drude piece, excluded from the weight).
pub fn drude_tensor(model: &dyn BlochModel, k: KPoint, band: usize, ordering: BandOrdering, step: f64) -> Result<Tensor2> {
    let center = unit_gauge(&eigensystem(&model.hamiltonian(k)?, ordering)?);
    let energy = |dx: f64, dy: f64| -> Result<Complex64> {
        let kk = KPoint::raw(k.kx + dx, k.ky + dy);
        Ok(locked_eigensystem(model, kk, &center, ordering)?.energies[band])
    };
    let e0 = center.energies[band];
    let h2 = step * step;
    let xx = (energy(step, 0.0)? - 2.0 * e0 + energy(-step, 0.0)?) / h2;
    let yy = (energy(0.0, step)? - 2.0 * e0 + energy(0.0, -step)?) / h2;
    let xy = (energy(step, step)? - energy(step, -step)? - energy(-step, step)? + energy(-step, -step)?) / (4.0 * h2);
    Ok([[xx, xy], [xy, yy]])
}

/// Relative size of Im z > 0 still treated as lying on the real axis.
pub const BRANCH_TOL: f64 = 1e-12;

/// Log z with arg in [-pi, 0]; the negative real axis maps to -pi.
pub fn log_lower(z: Complex64) -> Result<Complex64> {
    if z.im > BRANCH_TOL * z.norm() {
        return Err(Error::BranchViolation { arg: z.arg() });
    }
    let arg = if z.im >= 0.0 {
        if z.re < 0.0 {
            -PI
        } else {
            0.0
        }
    } else {
        z.arg()
    };
    Ok(Complex64::new(z.norm().ln(), arg))
}

/// Closed-form omega integral of sum_mu Re sigma^reg_{mu mu} / omega on [eta, inf).
/// Returns (value, coefficient of ln eta).
pub fn optical_weight_numeric(c: &OpticalCoefficients, eta: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParams("eta must be positive".into()));
    }
    let n = c.band;
    let (mut v, mut coef) = (0.0, 0.0);
    for m in (0..c.energies.len()).filter(|&m| m != n) {
        let z = c.energies[m] - c.energies[n];
        if eta >= z.norm() / 10.0 {
            return Err(Error::InvalidParams(format!("eta = {eta} is not below a tenth of the gap {}", z.norm())));
        }
        let lz = log_lower(z)?;
        for mu in 0..2 {
            let (f, h) = (c.f[m][mu][mu], c.h[m][mu][mu]);
            v += 2.0 * ((h / z).im - f.im * eta.ln() + (f * lz).im + 0.5 * PI * f.re);
            coef -= 2.0 * f.im;
        }
    }
    Ok((v, coef))
}

/// sigma^reg continued off the real axis; equals [`conductivity_regular`] for real omega.
///
/// With the slowest-decaying reference band every pole (omega = z, -z^*) has
/// Im omega <= 0.
pub fn conductivity_continued(c: &OpticalCoefficients, w: Complex64) -> Tensor2 {
    let n = c.band;
    let mut s = [[ZERO; 2]; 2];
    for m in (0..c.energies.len()).filter(|&m| m != n) {
        let z = c.energies[m] - c.energies[n];
        let zc = z.conj();
        for mu in 0..2 {
            for nu in 0..2 {
                let (f, h) = (c.f[m][mu][nu], c.h[m][mu][nu]);
                s[mu][nu] += -I * z * f / (z - w) + I * zc * f.conj() / (zc + w);
                s[mu][nu] += I * w * (h / ((z - w) * (z - w)) + h.conj() / ((zc + w) * (zc + w)));
            }
        }
    }
    s
}

/// Adaptive quadrature of the same integral with an analytic 1/omega^3 tail.
///
/// The segment [eta, omega_max] is deformed into the upper half plane
/// (eta -> eta + iH -> omega_max + iH -> omega_max), which leaves the value
/// unchanged and stays clear of poles sitting on or just below the axis.
pub fn optical_weight_quadrature(c: &OpticalCoefficients, eta: f64, omega_max: f64) -> Quadrature {
    let trace = |w: Complex64| {
        let s = conductivity_continued(c, w);
        (s[0][0] + s[1][1]) / w
    };
    let lift = 0.5 * (1..c.energies.len()).map(|m| (c.energies[m] - c.energies[0]).norm()).fold(eta, f64::max);
    let lift = lift.min(0.5 * omega_max);
    let (tol_abs, tol_rel, panels) = (1e-13, 1e-11, 20_000);
    let up = integrate(|t| I * trace(Complex64::new(eta, t)), 0.0, lift, &[], tol_abs, tol_rel, panels);
    let breaks: Vec<f64> = (0..c.energies.len())
        .filter(|&m| m != c.band)
        .map(|m| (c.energies[m] - c.energies[c.band]).re.abs())
        .filter(|x| *x > eta && *x < omega_max)
        .collect();
    let across = integrate(|x| trace(Complex64::new(x, lift)), eta, omega_max, &breaks, tol_abs, tol_rel, panels);
    let down = integrate(|t| -I * trace(Complex64::new(omega_max, lift - t)), 0.0, lift, &[], tol_abs, tol_rel, panels);
    // Re sigma / omega ~ a / omega^3 beyond the spectrum
    let a = trace(Complex64::new(omega_max, 0.0)).re * omega_max.powi(3);
    let value = (up.value + across.value + down.value).re + a / (2.0 * omega_max * omega_max);
    Quadrature {
        value: Complex64::new(value, 0.0),
        error: up.error + across.error + down.error,
        panels: up.panels + across.panels + down.panels,
    }
}

pub fn default_omega_max(energies: &[Complex64]) -> f64 {
    OMEGA_MAX_FACTOR * energies.iter().map(|e| e.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OpticalWeightResult {
    pub grid_size: (usize, usize),
    /// Per-k weight trace, row-major.
    pub per_k: Vec<f64>,
    /// BZ Riemann sum of the per-k closed-form omega integrals.
    pub bz_trace: f64,
    /// Two-band closed form int tr G^RR (pi + 2 arg(e_1 - e_0)); absent for N > 2.
    pub closed_form: Option<f64>,
    pub eta_used: f64,
    pub ln_eta_coefficient: f64,
    pub arg_infimum: f64,
}

struct WeightPoint {
    v: f64,
    coef: f64,
    closed: Option<f64>,
    arg: f64,
}

/// Optical weight of the slowest decaying band over the mesh.
pub fn optical_weight_grid(model: &dyn BlochModel, nx: usize, ny: usize, eta: f64) -> Result<OpticalWeightResult> {
    let ordering = BandOrdering::SlowestDecaying;
    let pts = map_mesh(nx, ny, |k| {
        let c = optical_coefficients(model, k, 0, ordering, AMPLITUDE_FD_STEP)?;
        let (v, coef) = optical_weight_numeric(&c, eta)?;
        let arg = (1..c.energies.len()).map(|m| log_lower(c.energies[m] - c.energies[0]).map(|l| l.im)).try_fold(0.0_f64, |a, x| x.map(|x| a.min(x)))?;
        let closed = if model.dim() == 2 {
            let es = eigensystem(&model.hamiltonian(k)?, ordering)?;
            let rec = record_from_eigensystem(&es, &derivatives(model, k)?, 0, k)?;
            Some((rec.qgt_rr[0][0].re + rec.qgt_rr[1][1].re) * (PI + 2.0 * arg))
        } else {
            None
        };
        Ok(WeightPoint { v, coef, closed, arg })
    })?;
    let area = (2.0 * PI) * (2.0 * PI) / (nx * ny) as f64;
    let closed_form = if model.dim() == 2 {
        Some(compensated_sum(pts.iter().map(|p| p.closed.unwrap_or(0.0))) * area)
    } else {
        None
    };
    Ok(OpticalWeightResult {
        grid_size: (nx, ny),
        bz_trace: compensated_sum(pts.iter().map(|p| p.v)) * area,
        ln_eta_coefficient: compensated_sum(pts.iter().map(|p| p.coef)) * area,
        arg_infimum: pts.iter().map(|p| p.arg).fold(0.0, f64::min),
        per_k: pts.iter().map(|p| p.v).collect(),
        closed_form,
        eta_used: eta,
    })
}

/// BZ sum of per-k omega quadratures (oracle for [`optical_weight_grid`]).
///
/// `omega_max` defaults to 50 max|e| at each k-point.
pub fn optical_weight_quadrature_grid(model: &dyn BlochModel, nx: usize, ny: usize, eta: f64, omega_max: Option<f64>) -> Result<f64> {
    let vals = map_mesh(nx, ny, |k| {
        let c = optical_coefficients(model, k, 0, BandOrdering::SlowestDecaying, AMPLITUDE_FD_STEP)?;
        let top = omega_max.unwrap_or_else(|| default_omega_max(&c.energies));
        Ok(optical_weight_quadrature(&c, eta, top).value.re)
    })?;
    Ok(compensated_sum(vals) * (2.0 * PI) * (2.0 * PI) / (nx * ny) as f64)
}

/// One row of the dissipation sweep behind the weight-versus-bound curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightSweepRow {
    pub big_gamma: f64,
    pub chern: i64,
    pub arg_infimum: f64,
    pub weight_numeric: f64,
    pub weight_closed: f64,
    pub weight_quadrature: f64,
    pub weight_numeric_eta10: f64,
    pub ln_eta_coefficient: f64,
    /// (pi + min arg) |C|.
    pub bound_rhs: f64,
    /// weight_numeric / 2 pi - bound_rhs.
    pub margin: f64,
}

/// Weight, bound and method cross-checks for one model.
///
/// `quadrature` adds the direct omega-quadrature column (NaN otherwise).
pub fn weight_row(
    model: &dyn BlochModel,
    big_gamma: f64,
    (nx, ny): (usize, usize),
    eta: f64,
    chern_ordering: BandOrdering,
    quadrature: Option<Option<f64>>,
) -> Result<WeightSweepRow> {
    let chern = chern_plaquette(model, 0, chern_ordering, nx, ny)?;
    let w = optical_weight_grid(model, nx, ny, eta)?;
    let w10 = optical_weight_grid(model, nx, ny, 10.0 * eta)?;
    let weight_quadrature = match quadrature {
        Some(top) => optical_weight_quadrature_grid(model, nx, ny, eta, top)?,
        None => f64::NAN,
    };
    let bound_rhs = (PI + w.arg_infimum) * chern.unsigned_abs() as f64;
    Ok(WeightSweepRow {
        big_gamma,
        chern,
        arg_infimum: w.arg_infimum,
        weight_numeric: w.bz_trace,
        weight_closed: w.closed_form.unwrap_or(f64::NAN),
        weight_quadrature,
        weight_numeric_eta10: w10.bz_trace,
        ln_eta_coefficient: w.ln_eta_coefficient,
        bound_rhs,
        margin: w.bz_trace / (2.0 * PI) - bound_rhs,
    })
}

/// Rice-Mele rows for each Gamma on an n x n mesh.
pub fn weight_sweep(
    base: &crate::models::RmParams,
    gammas: &[f64],
    n: usize,
    eta: f64,
    chern_ordering: BandOrdering,
) -> Result<Vec<WeightSweepRow>> {
    gammas
        .iter()
        .map(|&g| {
            let model = crate::models::RiceMele::new(crate::models::RmParams { big_gamma: g, ..*base })?;
            weight_row(&model, g, (n, n), eta, chern_ordering, None)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{RiceMele, RmParams};
    use crate::numeric::integrate_real_line;

    fn rm(gamma: f64, big_gamma: f64) -> RiceMele {
        RiceMele::new(RmParams { gamma, big_gamma, ..RmParams::default() }).unwrap()
    }

    #[test]
    fn lorentzian_peak_and_normalization() {
        assert!((lorentzian_kernel(0.0, 0.0, 1.0, 0.0) - 1.0 / PI).abs() < 1e-15);
        let q = integrate_real_line(|w| Complex64::new(lorentzian_kernel(0.7, 0.1, 0.05, w), 0.0), &[-0.8], 1e-12, 1e-10, 4000);
        assert!((q.value.re - 1.0).abs() < 1e-6);
        assert!(lorentzian_kernel(0.7, 0.0, -0.2, 0.3) < 0.0);
    }

    #[test]
    fn absorptive_part_special_cases() {
        let c = |re, im| Complex64::new(re, im);
        let sym = [[c(1.0, 2.0), c(0.5, -1.0)], [c(0.5, -1.0), c(3.0, 0.0)]];
        let a = absorptive_part(&sym);
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] - c(sym[i][j].im, 0.0)).norm() < 1e-15);
            }
        }
        let anti = [[c(0.0, 1.0), c(2.0, 1.0)], [c(-2.0, 1.0), c(0.0, -3.0)]];
        let a = absorptive_part(&anti);
        for i in 0..2 {
            for j in 0..2 {
                assert!((a[i][j] + I * anti[i][j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn single_transition_off_resonance() {
        let ops = [CMat::from_element(1, 1, Complex64::new(2.0, 0.0)), CMat::from_element(1, 1, Complex64::new(0.5, 1.0))];
        let t = TransitionTable::new(vec![0.3], vec![0.1], vec![0.2], ops).unwrap();
        let pi = lehmann_correlator(&t, &[1.0], 5.0).unwrap();
        // n = m: E_nn = S'_nn = 0, S''_nn = 0.4
        let expect = -Complex64::new(2.0, 0.0) * Complex64::new(0.5, 1.0) / Complex64::new(5.0, 0.4);
        assert!((pi[0][1] - expect).norm() < 1e-15);
    }

    #[test]
    fn pole_on_axis_rejected() {
        let ops = [CMat::identity(2, 2), CMat::identity(2, 2)];
        let t = TransitionTable::new(vec![0.0, 1.0], vec![0.0; 2], vec![0.0; 2], ops).unwrap();
        assert!(matches!(lehmann_correlator(&t, &[1.0, 0.0], 0.0), Err(Error::PoleOnAxis { .. })));
    }

    #[test]
    fn hermitian_limit_f_is_quantum_geometric_tensor() {
        let m = rm(0.0, 0.0);
        let k = KPoint::new(0.4, -1.2);
        let c = optical_coefficients(&m, k, 0, BandOrdering::SlowestDecaying, AMPLITUDE_FD_STEP).unwrap();
        let es = eigensystem(&m.hamiltonian(k).unwrap(), BandOrdering::SlowestDecaying).unwrap();
        let rec = record_from_eigensystem(&es, &derivatives(&m, k).unwrap(), 0, k).unwrap();
        for mu in 0..2 {
            for nu in 0..2 {
                assert!((c.f[1][mu][nu] - rec.qgt_rr[mu][nu]).norm() < 1e-9);
                assert!(c.h[1][mu][nu].norm() < 1e-12);
            }
        }
        let (v, coef) = optical_weight_numeric(&c, 1e-3).unwrap();
        assert!((v - PI * (rec.qgt_rr[0][0].re + rec.qgt_rr[1][1].re)).abs() < 1e-9);
        assert!(coef.abs() < 1e-9);
    }

    #[test]
    fn numeric_matches_quadrature_per_k() {
        for big_gamma in [0.5, 1.5] {
            let m = rm(1.0, big_gamma);
            let k = KPoint::new(0.3, -1.1);
            let c = optical_coefficients(&m, k, 0, BandOrdering::SlowestDecaying, AMPLITUDE_FD_STEP).unwrap();
            let (v, _) = optical_weight_numeric(&c, 1e-3).unwrap();
            let q = optical_weight_quadrature(&c, 1e-3, default_omega_max(&c.energies));
            assert!((v - q.value.re).abs() < 1e-4 * v.abs().max(1e-3), "{v} vs {}", q.value.re);
        }
    }

    #[test]
    fn conductivity_decays() {
        let m = rm(1.0, 1.5);
        let c = optical_coefficients(&m, KPoint::new(0.3, -1.1), 0, BandOrdering::SlowestDecaying, AMPLITUDE_FD_STEP).unwrap();
        let a = conductivity_regular(&c, 1e3)[0][0].norm() * 1e3;
        let b = conductivity_regular(&c, 1e4)[0][0].norm() * 1e4;
        assert!(b <= a * 1.01 + 1e-12);
    }

    #[test]
    fn log_branch() {
        assert!((log_lower(Complex64::new(-2.0, 0.0)).unwrap().im + PI).abs() < 1e-15);
        assert!(matches!(log_lower(Complex64::new(-1.0, 0.1)), Err(Error::BranchViolation { .. })));
        assert!((log_lower(Complex64::new(1.0, -1.0)).unwrap().im + PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn continued_conductivity_matches_real_axis() {
        let m = RiceMele::new(RmParams { big_gamma: 0.5, ..RmParams::default() }).unwrap();
        let c = optical_coefficients(&m, KPoint::new(0.4, -0.9), 0, BandOrdering::SlowestDecaying, AMPLITUDE_FD_STEP).unwrap();
        for w in [0.01, 0.7, 2.3, 9.0] {
            let a = conductivity_regular(&c, w);
            let b = conductivity_continued(&c, Complex64::new(w, 0.0));
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).norm() < 1e-12 * (1.0 + a[i][j].norm()));
                }
            }
        }
    }
}
