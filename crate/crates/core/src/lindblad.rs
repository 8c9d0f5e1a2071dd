//! Quadratic Lindbladians realizing a target non-Hermitian Hamiltonian, their
//! Keldysh self-energies, and the polarization bubbles built from them.
//!
//! Conventions: a jump J = a.c contributes M(a)_{ij} = a_i^* a_j to the
//! effective Hamiltonian h - (i/2) sum M(a). The retarded self-energy is the
//! Hermitian matrix S^R with H - H^dagger = 2i S^R, so a decaying level has
//! S^R_n = Im e_n = -S''_n.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Tensor2;
use crate::models::{pauli_x, pauli_y, pauli_z, CMat};
use crate::numeric::{integrate_real_line, Quadrature};
use crate::spectra::{eigensystem, BandOrdering};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative tolerance for Hermiticity and commutator checks.
pub const STRUCTURE_TOL: f64 = 1e-10;

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// M(a)_{ij} = a_i^* a_j; for two components this is M(alpha, beta).
pub fn jump_matrix(a: &[Complex64]) -> CMat {
    CMat::from_fn(a.len(), a.len(), |i, j| a[i].conj() * a[j])
}

pub fn m_matrix(alpha: Complex64, beta: Complex64) -> CMat {
    jump_matrix(&[alpha, beta])
}

/// Jump vectors plus the constant shift of the effective Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub jumps: Vec<Vec<Complex64>>,
    /// Effective Hamiltonian minus target, a multiple of the identity.
    pub regularizer: Complex64,
}

impl JumpSpec {
    pub fn dissipator(&self, dim: usize) -> CMat {
        let mut m = CMat::zeros(dim, dim);
        for a in &self.jumps {
            m += jump_matrix(a);
        }
        m
    }
}

/// Hermitian part (H + H^dagger)/2 and the Hermitian D with H - H^dagger = -2i D.
pub fn split_hamiltonian(h: &CMat) -> (CMat, CMat) {
    let hd = h.adjoint();
    ((h + &hd) * c(0.5), (h - &hd) * (I * 0.5))
}

/// Jumps whose dissipator reproduces the anti-Hermitian part -i D.
///
/// D = c 1 + a.sigma is assembled from the three Pauli recipes
/// a sigma^x = M(r, s r) - |a|, a sigma^y = M(r, -i s r) - |a|,
/// a sigma^z = M(sqrt(2a), 0) - a (a > 0) or M(0, sqrt(2|a|)) + a (a < 0),
/// with r = sqrt|a| and s = sgn a; each vector is scaled by sqrt 2.
pub fn decompose_antihermitian(d: &CMat) -> Result<JumpSpec> {
    if d.nrows() != 2 || d.ncols() != 2 {
        return Err(Error::InvalidParams("jump decomposition needs a 2x2 target".into()));
    }
    let residue = max_abs(&(d - d.adjoint())) / max_abs(d).max(1.0);
    if residue > STRUCTURE_TOL {
        return Err(Error::NonHermitianTarget { residue });
    }
    let comp = |p: &CMat| (d * p).trace().re / 2.0;
    let (c0, ax, ay, az) = ((d.trace().re) / 2.0, comp(&pauli_x()), comp(&pauli_y()), comp(&pauli_z()));
    let root2 = std::f64::consts::SQRT_2;
    let mut jumps = Vec::new();
    let mut shift = 0.0;
    if ax != 0.0 {
        let r = ax.abs().sqrt();
        jumps.push(vec![c(r * root2), c(ax.signum() * r * root2)]);
        shift -= ax.abs();
    }
    if ay != 0.0 {
        let r = ay.abs().sqrt();
        jumps.push(vec![c(r * root2), -I * ay.signum() * r * root2]);
        shift -= ay.abs();
    }
    if az > 0.0 {
        jumps.push(vec![c((2.0 * az).sqrt() * root2), ZERO]);
        shift -= az;
    } else if az < 0.0 {
        jumps.push(vec![ZERO, c((2.0 * az.abs()).sqrt() * root2)]);
        shift += az;
    }
    // -(i/2) sum M = -i (D - (c0 + shift)) = -i D + i (c0 + shift)
    Ok(JumpSpec { jumps, regularizer: I * (c0 + shift) })
}

/// h - (i/2) sum_m M(a_m).
pub fn effective_hamiltonian(h: &CMat, spec: &JumpSpec) -> CMat {
    h - spec.dissipator(h.nrows()) * (I * 0.5)
}

/// Jump vector and Keldysh self-energy of the dissipative Rice-Mele dimer.
pub fn rice_mele_jump(gamma: f64) -> JumpSpec {
    let r = gamma.sqrt();
    JumpSpec { jumps: vec![vec![c(r), I * r]], regularizer: c(0.0) - I * (gamma / 2.0) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proportionality {
    /// S^K = -2i S^R.
    MinusTwoI,
    /// S^K = +2i S^R.
    PlusTwoI,
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeldyshSet {
    pub sigma_k: CMat,
    pub sigma_r: CMat,
    pub proportionality: Proportionality,
}

impl KeldyshSet {
    /// Bath of a target Hamiltonian: S^R = -D; an uninverted bath has S^K = 2i S^R.
    pub fn from_target(h: &CMat, inverted: bool) -> Self {
        let (_, d) = split_hamiltonian(h);
        let sigma_r = -d;
        let (sign, proportionality) = if inverted {
            (-2.0, Proportionality::MinusTwoI)
        } else {
            (2.0, Proportionality::PlusTwoI)
        };
        KeldyshSet { sigma_k: &sigma_r * (I * sign), sigma_r, proportionality }
    }

    pub fn general(sigma_k: CMat, sigma_r: CMat) -> Self {
        KeldyshSet { sigma_k, sigma_r, proportionality: Proportionality::General }
    }
}

/// L = [[H, S^K], [0, -H^T]].
pub fn lindbladian_matrix(h: &CMat, sigma_k: &CMat) -> CMat {
    let n = h.nrows();
    let mut l = CMat::zeros(2 * n, 2 * n);
    l.view_mut((0, 0), (n, n)).copy_from(h);
    l.view_mut((0, n), (n, n)).copy_from(sigma_k);
    l.view_mut((n, n), (n, n)).copy_from(&(-h.transpose()));
    l
}

pub fn commutator_norm(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a * b - b * a))
}

/// G^K(omega) = G^R S^K G^A with G^R = (omega - H)^-1 and G^A = (G^R)^dagger.
///
/// With `projected` the product is taken band by band in the eigenbasis of H,
/// which requires [H, S^K] = 0.
pub fn keldysh_green(h: &CMat, sigma_k: &CMat, omega: f64, projected: bool) -> Result<CMat> {
    let n = h.nrows();
    if projected {
        let scale = max_abs(h).max(max_abs(sigma_k)).max(1.0);
        let norm = commutator_norm(h, sigma_k);
        if norm > STRUCTURE_TOL * scale * scale {
            return Err(Error::CommutatorViolation { norm });
        }
        let es = eigensystem(h, BandOrdering::SlowestDecaying)?;
        let mut g = CMat::zeros(n, n);
        for b in 0..n {
            let e = es.energies[b];
            let k = es.l(b).dotc(&(sigma_k * es.r(b)));
            let val = k / ((omega - e) * (omega - e.conj()));
            g += es.r(b) * es.l(b).adjoint() * val;
        }
        return Ok(g);
    }
    let w = CMat::identity(n, n) * c(omega);
    let gr = (&w - h).try_inverse().ok_or(Error::PoleOnAxis { omega })?;
    let ga = gr.adjoint();
    Ok(&gr * sigma_k * ga)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BubbleSide {
    /// Advanced propagator on band n (h^+).
    A,
    /// Retarded propagator on band n (h^-).
    R,
}

fn propagator_pole(e_n: Complex64, side: BubbleSide) -> Complex64 {
    match side {
        BubbleSide::A => e_n.conj(),
        BubbleSide::R => e_n,
    }
}

/// h^{+(-)}_{nm}(omega) = int d omega' G^{A(R)}_n(omega' + omega) G^K_m(omega')
/// with G^K_m(x) = K / ((x - e_m)(x - e_m^*)), by residues.
pub fn bubble_h(e_n: Complex64, e_m: Complex64, k_m: Complex64, omega: f64, side: BubbleSide) -> Result<Complex64> {
    let s = e_m.im.abs();
    if s <= f64::EPSILON * e_m.norm().max(1.0) {
        return Err(Error::NonIntegrable { rate: -e_m.im });
    }
    Ok(contour(e_n, e_m, k_m / (2.0 * I * s), omega, side))
}

/// Closed form in terms of r = K / (2 i |Im e_m|), which stays finite as the
/// rate vanishes when K is proportional to it.
fn contour(e_n: Complex64, e_m: Complex64, r: Complex64, omega: f64, side: BubbleSide) -> Complex64 {
    let s = e_m.im.abs();
    let p = propagator_pole(e_n, side);
    let lower_is_free = match side {
        BubbleSide::A => p.im >= 0.0,
        BubbleSide::R => p.im > 0.0,
    };
    if lower_is_free {
        // only x = E_m - i s below the axis
        2.0 * PI * I * r / (e_m.re - I * s + omega - p)
    } else {
        2.0 * PI * I * r / (e_m.re + I * s + omega - p)
    }
}

/// h^{+-} for a bath with S^K_m = +-2i Im e_m (opposite sign on the R side).
///
/// A level with zero rate is taken as the limit of a decaying one.
pub fn bath_bubble_h(e_n: Complex64, e_m: Complex64, omega: f64, side: BubbleSide, inverted: bool) -> Complex64 {
    let flip = if inverted { -1.0 } else { 1.0 };
    let side_sign = match side {
        BubbleSide::A => 1.0,
        BubbleSide::R => -1.0,
    };
    // K / (2i s) with K = 2i flip Im e_m
    let ratio = if e_m.im == 0.0 { -1.0 } else { e_m.im / e_m.im.abs() };
    contour(e_n, e_m, Complex64::new(flip * side_sign * ratio, 0.0), omega, side)
}

/// The same integral by adaptive quadrature over the real line.
pub fn bubble_h_quadrature(e_n: Complex64, e_m: Complex64, k_m: Complex64, omega: f64, side: BubbleSide) -> Result<Quadrature> {
    if e_m.im == 0.0 {
        return Err(Error::NonIntegrable { rate: 0.0 });
    }
    let p = propagator_pole(e_n, side);
    let f = |x: f64| {
        let gk = k_m / ((x - e_m) * (x - e_m.conj()));
        gk / (x + omega - p)
    };
    let centers = [e_m.re, p.re - omega];
    Ok(integrate_real_line(f, &centers, 1e-13, 1e-10, 40_000))
}

/// Common orthonormal eigenbasis of a normal H with [h, D] = 0.
pub struct CommutingSystem {
    pub energies: Vec<Complex64>,
    pub basis: CMat,
}

impl CommutingSystem {
    pub fn new(h: &CMat) -> Result<Self> {
        let (herm, d) = split_hamiltonian(h);
        let scale = max_abs(h).max(1.0);
        let norm = commutator_norm(&herm, &d);
        if norm > STRUCTURE_TOL * scale * scale {
            return Err(Error::CommutatorViolation { norm });
        }
        let es = eigensystem(h, BandOrdering::SlowestDecaying)?;
        let mut basis = es.right.clone();
        for j in 0..basis.ncols() {
            let n = basis.column(j).norm();
            basis.column_mut(j).unscale_mut(n);
        }
        Ok(CommutingSystem { energies: es.energies, basis })
    }

    /// O_{nm} = <n|O|m>.
    pub fn elements(&self, o: &CMat) -> CMat {
        self.basis.adjoint() * o * &self.basis
    }
}

/// Commuting instance carrying the complex spectrum of a model at `k`.
///
/// The eigenvectors of the Hermitian part give the common basis. Rates are made
/// nonnegative by the jump regularizer (two bands) or by the largest gain
/// (more bands); `broadening` adds a uniform loss channel. An inverted bath
/// flips every rate.
pub fn commuting_instance(
    model: &dyn crate::models::BlochModel,
    k: crate::models::KPoint,
    broadening: f64,
    inverted: bool,
) -> Result<(CommutingSystem, [CMat; 2])> {
    let h = model.hamiltonian(k)?;
    let (herm, d) = split_hamiltonian(&h);
    let shift = if h.nrows() == 2 {
        decompose_antihermitian(&d)?.regularizer.im
    } else {
        -spectrum_by_real(&h)?.iter().map(|e| e.im).fold(0.0, f64::max)
    };
    let flip = if inverted { -1.0 } else { 1.0 };
    let energies: Vec<Complex64> = spectrum_by_real(&h)?
        .into_iter()
        .map(|e| Complex64::new(e.re, flip * (e.im + shift - broadening)))
        .collect();
    let eig = nalgebra::SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let basis = CMat::from_fn(h.nrows(), h.nrows(), |r, col| eig.eigenvectors[(r, order[col])]);
    let dh = crate::geometry::derivatives(model, k)?;
    let ops = dh.map(|m| split_hamiltonian(&m).0);
    Ok((CommutingSystem { energies, basis }, ops))
}

fn spectrum_by_real(h: &CMat) -> Result<Vec<Complex64>> {
    let mut e = eigensystem(h, BandOrdering::AscendingReal)?.energies;
    e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(e)
}

/// pi^abs of the upper-sign commuting bubble on an omega grid.
pub fn commuting_absorptive_spectrum(sys: &CommutingSystem, ops: &[CMat; 2], omegas: &[f64]) -> Vec<(f64, Tensor2)> {
    omegas
        .iter()
        .map(|&w| (w, crate::response::absorptive_part(&polarization_bubble_commuting(sys, ops, w, true))))
        .collect()
}

/// pi_ij(omega) = -/+ (1/2) sum_nm O^i_nm O^j_mn / (E_nm - omega + i S''_nm).
///
/// `upper` selects the upper sign. S''_nm = S''_n + S''_m.
pub fn polarization_bubble_commuting(sys: &CommutingSystem, ops: &[CMat; 2], omega: f64, upper: bool) -> Tensor2 {
    let o = [sys.elements(&ops[0]), sys.elements(&ops[1])];
    let sign = if upper { -0.5 } else { 0.5 };
    let n = sys.energies.len();
    let mut pi = [[ZERO; 2]; 2];
    for a in 0..n {
        for b in 0..n {
            let (en, em) = (sys.energies[a], sys.energies[b]);
            let denom = Complex64::new(en.re - em.re - omega, -en.im - em.im);
            for i in 0..2 {
                for j in 0..2 {
                    pi[i][j] += sign * o[i][(a, b)] * o[j][(b, a)] / denom;
                }
            }
        }
    }
    pi
}

/// Defining omega' integral of the commuting bubble (quadrature oracle).
pub fn polarization_bubble_quadrature(sys: &CommutingSystem, ops: &[CMat; 2], omega: f64, upper: bool) -> Tensor2 {
    let o = [sys.elements(&ops[0]), sys.elements(&ops[1])];
    let sign = if upper { 1.0 } else { -1.0 };
    let n = sys.energies.len();
    let mut pi = [[ZERO; 2]; 2];
    for a in 0..n {
        for b in 0..n {
            let (en, em) = (sys.energies[a], sys.energies[b]);
            // G^R_m(x) G^R_n(x + omega) S^R_n G^A_n(x + omega) / 2 pi
            let f = |x: f64| {
                let y = x + omega;
                en.im / ((x - em) * (y - en) * (y - en.conj())) / (2.0 * PI)
            };
            let q = integrate_real_line(f, &[em.re, en.re - omega], 1e-14, 1e-11, 40_000).value;
            for i in 0..2 {
                for j in 0..2 {
                    pi[i][j] += sign * q * o[i][(a, b)] * o[j][(b, a)];
                }
            }
        }
    }
    pi
}

/// (1/2) sum_n <R_n| O^i G^R(e_n^* - W) O^j |L_n>, G^R(z) = sum_l |R_l><L_l| / (z - e_l).
pub fn response_vector_jump(h: &CMat, ops: &[CMat; 2], big_omega: f64) -> Result<Tensor2> {
    let es = eigensystem(h, BandOrdering::SlowestDecaying)?;
    let dim = es.dim();
    let mut out = [[ZERO; 2]; 2];
    for n in 0..dim {
        let z = es.energies[n].conj() - big_omega;
        let mut g = CMat::zeros(dim, dim);
        for l in 0..dim {
            g += es.r(l) * es.l(l).adjoint() / (z - es.energies[l]);
        }
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] += 0.5 * es.r(n).dotc(&(&ops[i] * &g * &ops[j] * es.l(n)));
            }
        }
    }
    Ok(out)
}

/// Frequencies e_n^* - e_l at which the response-vector expression has poles.
pub fn response_vector_poles(h: &CMat) -> Result<Vec<Complex64>> {
    let es = eigensystem(h, BandOrdering::SlowestDecaying)?;
    Ok(es.energies.iter().flat_map(|en| es.energies.iter().map(move |el| en.conj() - el)).collect())
}

/// Outcome of a positivity scan of Re h^{+-}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PositivityScan {
    pub samples: usize,
    pub min_real: f64,
    /// Frequencies with a negative real part beyond tolerance.
    pub failing_omegas: Vec<f64>,
    pub passed: bool,
}

/// Scans Re h^+_{nm} (with K_m = 2i Im e_m) and Re h^-_{nm} (with the opposite sign)
/// for every band pair. `inverted` flips the bath occupation.
pub fn positivity_scan(energies: &[Complex64], omegas: &[f64], inverted: bool) -> Result<PositivityScan> {
    let mut min_real = f64::INFINITY;
    let mut failing = Vec::new();
    let mut scale: f64 = 0.0;
    let mut values = Vec::new();
    for &w in omegas {
        let mut worst = f64::INFINITY;
        for &en in energies {
            for &em in energies {
                let hp = bath_bubble_h(en, em, w, BubbleSide::A, inverted);
                let hm = bath_bubble_h(en, em, w, BubbleSide::R, inverted);
                scale = scale.max(hp.norm()).max(hm.norm());
                worst = worst.min(hp.re).min(hm.re);
            }
        }
        values.push((w, worst));
        min_real = min_real.min(worst);
    }
    let tol = STRUCTURE_TOL * scale;
    for (w, v) in values {
        if v < -tol {
            failing.push(w);
        }
    }
    Ok(PositivityScan { samples: omegas.len(), min_real, passed: failing.is_empty(), failing_omegas: failing })
}
