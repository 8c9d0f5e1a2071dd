//! Gauge-invariant non-Hermitian quantum geometry at a k-point.
//!
//! Multiband formulas use biorthonormal vectors with explicit overlap weights;
//! the two-band RR/LL forms use unit-norm vectors. The LR/RL tensors are kept
//! unnormalized (no division by the norm product); see [`qgt_rl_normalized`].

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{mesh_point, BlochModel, CMat, Direction, KPoint};
use crate::spectra::{eigensystem, BandOrdering, Eigensystem, GAP_TOL};

/// Complex tensor indexed by (mu, nu) with 0 = x, 1 = y.
pub type Tensor2 = [[Complex64; 2]; 2];

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// All geometric quantities of one band at one k-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeometryRecord {
    pub k: KPoint,
    pub band: usize,
    pub energies: Vec<Complex64>,
    pub qgt_rr: Tensor2,
    pub qgt_ll: Tensor2,
    pub qgt_lr: Tensor2,
    pub qgt_rl: Tensor2,
    pub anomalous_r: [Complex64; 2],
    pub anomalous_l: [Complex64; 2],
    /// F = i (Q^LR_xy - Q^LR_yx); complex away from the Hermitian limit.
    pub curvature: Complex64,
    pub norm_product: f64,
}

fn element(a: &DVector<Complex64>, m: &CMat, b: &DVector<Complex64>) -> Complex64 {
    a.dotc(&(m * b))
}

fn gap_scale(es: &Eigensystem) -> f64 {
    es.energies.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

fn checked_gap(es: &Eigensystem, n: usize, m: usize) -> Result<Complex64> {
    let d = es.energies[n] - es.energies[m];
    if d.norm() < GAP_TOL * gap_scale(es) {
        return Err(Error::ExceptionalPoint { gap: d.norm() });
    }
    Ok(d)
}

/// X^mu_m = <L_m|d_mu H|R_n> / (e_n - e_m), zero for m = n.
pub fn right_amplitudes(es: &Eigensystem, dh: &[CMat; 2], n: usize) -> Result<[Vec<Complex64>; 2]> {
    let rn = es.r(n);
    let mut out = [vec![ZERO; es.dim()], vec![ZERO; es.dim()]];
    for m in (0..es.dim()).filter(|&m| m != n) {
        let gap = checked_gap(es, n, m)?;
        let lm = es.l(m);
        for mu in 0..2 {
            out[mu][m] = element(&lm, &dh[mu], &rn) / gap;
        }
    }
    Ok(out)
}

/// Y^mu_m = <R_m|d_mu H^dagger|L_n> / (e_n - e_m)^*, zero for m = n.
pub fn left_amplitudes(es: &Eigensystem, dh: &[CMat; 2], n: usize) -> Result<[Vec<Complex64>; 2]> {
    let ln = es.l(n);
    let mut out = [vec![ZERO; es.dim()], vec![ZERO; es.dim()]];
    for m in (0..es.dim()).filter(|&m| m != n) {
        let gap = checked_gap(es, n, m)?;
        let rm = es.r(m);
        for mu in 0..2 {
            out[mu][m] = element(&rm, &dh[mu].adjoint(), &ln) / gap.conj();
        }
    }
    Ok(out)
}

/// Band-diagonal LR tensor summed over the unoccupied bands.
pub fn qgt_lr_multiband(es: &Eigensystem, dh: &[CMat; 2], n: usize, occupied: &[usize]) -> Result<Tensor2> {
    if !occupied.contains(&n) {
        return Err(Error::InvalidParams(format!("band {n} is not in the occupied set")));
    }
    let (ln, rn) = (es.l(n), es.r(n));
    let mut q = [[ZERO; 2]; 2];
    for k in (0..es.dim()).filter(|k| !occupied.contains(k)) {
        let gap = checked_gap(es, n, k)?;
        let (lk, rk) = (es.l(k), es.r(k));
        let left: Vec<Complex64> = dh.iter().map(|d| element(&ln, d, &rk)).collect();
        let right: Vec<Complex64> = dh.iter().map(|d| element(&lk, d, &rn)).collect();
        for mu in 0..2 {
            for nu in 0..2 {
                q[mu][nu] += left[mu] * right[nu] / (gap * gap);
            }
        }
    }
    Ok(q)
}

/// Q^RL_{mu nu} = (Q^LR_{nu mu})^*.
pub fn qgt_rl_from_lr(lr: &Tensor2) -> Tensor2 {
    [[lr[0][0].conj(), lr[1][0].conj()], [lr[0][1].conj(), lr[1][1].conj()]]
}

fn unit(v: DVector<Complex64>) -> DVector<Complex64> {
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

fn require_two_band(es: &Eigensystem) -> Result<()> {
    if es.dim() != 2 {
        return Err(Error::InvalidParams("two-band formula needs N = 2".into()));
    }
    Ok(())
}

/// Two-band RR tensor with unit-norm vectors.
pub fn qgt_rr_two_band(es: &Eigensystem, dh: &[CMat; 2], n: usize) -> Result<Tensor2> {
    require_two_band(es)?;
    let m = 1 - n;
    let gap = checked_gap(es, n, m)?;
    let (r, l) = (unit(es.r(n)), unit(es.l(m)));
    let a: Vec<Complex64> = dh.iter().map(|d| element(&l, d, &r)).collect();
    let g2 = gap.norm_sqr();
    Ok([[a[0].conj() * a[0] / g2, a[0].conj() * a[1] / g2], [a[1].conj() * a[0] / g2, a[1].conj() * a[1] / g2]])
}

/// Two-band LL tensor with unit-norm vectors.
pub fn qgt_ll_two_band(es: &Eigensystem, dh: &[CMat; 2], n: usize) -> Result<Tensor2> {
    require_two_band(es)?;
    let m = 1 - n;
    let gap = checked_gap(es, n, m)?;
    let (l, r) = (unit(es.l(n)), unit(es.r(m)));
    // <L_n|d_mu H|R_m> <R_m|d_nu H^dagger|L_n>
    let a: Vec<Complex64> = dh.iter().map(|d| element(&l, d, &r)).collect();
    let g2 = gap.norm_sqr();
    Ok([[a[0] * a[0].conj() / g2, a[0] * a[1].conj() / g2], [a[1] * a[0].conj() / g2, a[1] * a[1].conj() / g2]])
}

fn weighted_metric(amp: &[Vec<Complex64>; 2], gram: &CMat, n: usize) -> Tensor2 {
    let dim = gram.nrows();
    let gnn = gram[(n, n)];
    let mut q = [[ZERO; 2]; 2];
    for m in (0..dim).filter(|&m| m != n) {
        for k in (0..dim).filter(|&k| k != n) {
            let w = gram[(m, k)] - gram[(m, n)] * gram[(n, k)] / gnn;
            for mu in 0..2 {
                for nu in 0..2 {
                    q[mu][nu] += w * amp[mu][m].conj() * amp[nu][k];
                }
            }
        }
    }
    for row in q.iter_mut() {
        for z in row.iter_mut() {
            *z /= gnn;
        }
    }
    q
}

/// Symmetric RR tensor with weights (I_mk - I_mn I_nk / I_nn) over m, k != n.
pub fn qgt_rr_multiband(es: &Eigensystem, dh: &[CMat; 2], n: usize) -> Result<Tensor2> {
    let x = right_amplitudes(es, dh, n)?;
    Ok(weighted_metric(&x, &es.overlap_right, n))
}

/// Symmetric LL tensor with the inverse overlap matrix as weights.
pub fn qgt_ll_multiband(es: &Eigensystem, dh: &[CMat; 2], n: usize) -> Result<Tensor2> {
    let y = left_amplitudes(es, dh, n)?;
    Ok(weighted_metric(&y, &es.overlap_left, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    R,
    L,
}

/// Anomalous connection Q^R_mu or Q^L_mu of band n.
pub fn anomalous_connection(es: &Eigensystem, dh: &[CMat; 2], n: usize, side: Side) -> Result<[Complex64; 2]> {
    let (amp, gram) = match side {
        Side::R => (right_amplitudes(es, dh, n)?, &es.overlap_right),
        Side::L => (left_amplitudes(es, dh, n)?, &es.overlap_left),
    };
    let mut q = [ZERO; 2];
    for mu in 0..2 {
        for m in (0..es.dim()).filter(|&m| m != n) {
            q[mu] += gram[(n, m)] / gram[(n, n)] * amp[mu][m];
        }
        q[mu] *= I;
    }
    Ok(q)
}

/// F = i (Q^LR_xy - Q^LR_yx).
pub fn curvature_from_lr(lr: &Tensor2) -> Complex64 {
    I * (lr[0][1] - lr[1][0])
}

/// Real curvature; fails when the imaginary part exceeds `tol`.
pub fn berry_curvature_lr(lr: &Tensor2, tol: f64) -> Result<f64> {
    let f = curvature_from_lr(lr);
    if f.im.abs() > tol {
        return Err(Error::NonRealCurvature { imag: f.im });
    }
    Ok(f.re)
}

/// The RL tensor divided by the norm product.
pub fn qgt_rl_normalized(rec: &GeometryRecord) -> Tensor2 {
    let mut q = rec.qgt_rl;
    for row in q.iter_mut() {
        for z in row.iter_mut() {
            *z /= rec.norm_product;
        }
    }
    q
}

pub fn derivatives(model: &dyn BlochModel, k: KPoint) -> Result<[CMat; 2]> {
    Ok([model.derivative(k, Direction::X)?, model.derivative(k, Direction::Y)?])
}

/// Builds the record of band n from a precomputed eigensystem.
pub fn record_from_eigensystem(es: &Eigensystem, dh: &[CMat; 2], n: usize, k: KPoint) -> Result<GeometryRecord> {
    if n >= es.dim() {
        return Err(Error::InvalidParams(format!("band {n} out of range")));
    }
    let (qgt_rr, qgt_ll) = if es.dim() == 2 {
        (qgt_rr_two_band(es, dh, n)?, qgt_ll_two_band(es, dh, n)?)
    } else {
        (qgt_rr_multiband(es, dh, n)?, qgt_ll_multiband(es, dh, n)?)
    };
    let qgt_lr = qgt_lr_multiband(es, dh, n, &[n])?;
    let norm_product = es.overlap_right[(n, n)].re * es.overlap_left[(n, n)].re;
    Ok(GeometryRecord {
        k,
        band: n,
        energies: es.energies.clone(),
        qgt_rr,
        qgt_ll,
        qgt_rl: qgt_rl_from_lr(&qgt_lr),
        qgt_lr,
        anomalous_r: anomalous_connection(es, dh, n, Side::R)?,
        anomalous_l: anomalous_connection(es, dh, n, Side::L)?,
        curvature: curvature_from_lr(&qgt_lr),
        norm_product,
    })
}

pub fn geometry_record(model: &dyn BlochModel, k: KPoint, n: usize, ordering: BandOrdering) -> Result<GeometryRecord> {
    let h = model.hamiltonian(k)?;
    let es = eigensystem(&h, ordering)?;
    let dh = derivatives(model, k)?;
    record_from_eigensystem(&es, &dh, n, k)
}

/// Geometry records on the uniform mesh, row-major in (kx, ky).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeometryGrid {
    pub nx: usize,
    pub ny: usize,
    pub band: usize,
    pub records: Vec<GeometryRecord>,
}

impl GeometryGrid {
    pub fn cell_area(&self) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        two_pi * two_pi / (self.nx * self.ny) as f64
    }

    pub fn at(&self, i: usize, j: usize) -> &GeometryRecord {
        &self.records[i * self.ny + j]
    }

    /// True for mesh points on the kx = -pi or ky = -pi boundary lines.
    pub fn is_edge(&self, idx: usize) -> bool {
        idx / self.ny == 0 || idx.is_multiple_of(self.ny)
    }
}

/// Evaluates `f` on every mesh point in parallel; output order is row-major.
/// Failures are gathered into a single [`Error::ExceptionalMesh`] when they are
/// spectral, otherwise the first one is returned.
pub fn map_mesh<T, F>(nx: usize, ny: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(KPoint) -> Result<T> + Sync + Send,
{
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParams("grid must be non-empty".into()));
    }
    let results: Vec<Result<T>> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| f(mesh_point(idx / ny, idx % ny, nx, ny)))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut bad = Vec::new();
    let mut other = None;
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                let k = mesh_point(idx / ny, idx % ny, nx, ny);
                match e {
                    Error::ExceptionalPoint { .. } | Error::DegeneratePoint { .. } | Error::IllConditioned { .. } => {
                        bad.push((k.kx, k.ky))
                    }
                    e => {
                        other.get_or_insert(e);
                    }
                }
            }
        }
    }
    if let Some(e) = other {
        return Err(e);
    }
    if let Some(&(kx, ky)) = bad.first() {
        return Err(Error::ExceptionalMesh { count: bad.len(), kx, ky, points: bad });
    }
    Ok(out)
}

pub fn scan_geometry(model: &dyn BlochModel, band: usize, ordering: BandOrdering, nx: usize, ny: usize) -> Result<GeometryGrid> {
    let records = map_mesh(nx, ny, |k| geometry_record(model, k, band, ordering))?;
    Ok(GeometryGrid { nx, ny, band, records })
}

/// QGTs and connections from explicit eigenvector derivatives (test oracle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDifferenceGeometry {
    pub qgt_rr: Tensor2,
    pub qgt_ll: Tensor2,
    pub qgt_lr: Tensor2,
    pub qgt_rl: Tensor2,
    pub anomalous_r: [Complex64; 2],
    pub anomalous_l: [Complex64; 2],
}

/// Right/left vectors of the band continuing `reference`, with the right
/// vector unit-norm and phase-aligned so that <reference|R> is real positive.
pub fn locked_pair(
    model: &dyn BlochModel,
    k: KPoint,
    reference: &DVector<Complex64>,
    ordering: BandOrdering,
) -> Result<(Complex64, DVector<Complex64>, DVector<Complex64>)> {
    let es = eigensystem(&model.hamiltonian(k)?, ordering)?;
    let (best, ov) = (0..es.dim())
        .map(|m| (m, reference.dotc(&es.r(m))))
        .max_by(|a, b| (a.1.norm() / es.r(a.0).norm()).total_cmp(&(b.1.norm() / es.r(b.0).norm())))
        .ok_or(Error::InvalidParams("empty eigensystem".into()))?;
    let norm = es.r(best).norm();
    let overlap = ov.norm() / (norm * reference.norm());
    if overlap < 0.5 {
        return Err(Error::GaugeLockFailure { overlap });
    }
    let phase = ov.conj() / ov.norm();
    let r = es.r(best) * (phase / norm);
    let l = es.l(best) * (phase * norm);
    Ok((es.energies[best], r, l))
}

/// Rescales every right vector to unit norm (left vectors follow the dual rule).
pub fn unit_gauge(es: &Eigensystem) -> Eigensystem {
    let c: Vec<Complex64> = (0..es.dim()).map(|n| Complex64::new(1.0 / es.r(n).norm(), 0.0)).collect();
    es.rescaled(&c)
}

/// Eigensystem at `k` with bands matched to `reference` by maximal overlap,
/// right vectors unit-norm and phase-aligned with the reference columns.
pub fn locked_eigensystem(model: &dyn BlochModel, k: KPoint, reference: &Eigensystem, ordering: BandOrdering) -> Result<Eigensystem> {
    let es = unit_gauge(&eigensystem(&model.hamiltonian(k)?, ordering)?);
    let n = es.dim();
    let mut perm = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    for a in 0..n {
        let ra = unit(reference.r(a));
        let (b, ov) = (0..n)
            .map(|b| (b, ra.dotc(&es.r(b))))
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .ok_or(Error::InvalidParams("empty eigensystem".into()))?;
        if ov.norm() < 0.5 || perm.contains(&b) {
            return Err(Error::GaugeLockFailure { overlap: ov.norm() });
        }
        perm.push(b);
        phases.push(ov.conj() / ov.norm());
    }
    let pick = |m: &CMat| CMat::from_columns(&perm.iter().zip(&phases).map(|(&b, &p)| m.column(b) * p).collect::<Vec<_>>());
    let right = pick(&es.right);
    let left = pick(&es.left);
    Ok(Eigensystem {
        energies: perm.iter().map(|&b| es.energies[b]).collect(),
        overlap_right: right.adjoint() * &right,
        overlap_left: left.adjoint() * &left,
        right,
        left,
    })
}

fn projected(da: &[DVector<Complex64>; 2], a: &DVector<Complex64>, db: &[DVector<Complex64>; 2], b: &DVector<Complex64>) -> Tensor2 {
    // <d_mu a|d_nu b> - <d_mu a|b><a|d_nu b>
    let mut q = [[ZERO; 2]; 2];
    for mu in 0..2 {
        for nu in 0..2 {
            q[mu][nu] = da[mu].dotc(&db[nu]) - da[mu].dotc(b) * a.dotc(&db[nu]);
        }
    }
    q
}

/// Phase-locked central-difference oracle for all geometric quantities.
pub fn finite_difference_qgt(
    model: &dyn BlochModel,
    k: KPoint,
    band: usize,
    ordering: BandOrdering,
    h: f64,
) -> Result<FiniteDifferenceGeometry> {
    let es = eigensystem(&model.hamiltonian(k)?, ordering)?;
    if band >= es.dim() {
        return Err(Error::InvalidParams(format!("band {band} out of range")));
    }
    let r0 = unit(es.r(band));
    let (_, r, l) = locked_pair(model, k, &r0, ordering)?;
    let mut dr = [r.clone(), r.clone()];
    let mut dl = [l.clone(), l.clone()];
    let mut dlt = [l.clone(), l.clone()];
    let lt = unit(l.clone());
    for dir in Direction::ALL {
        let (_, rp, lp) = locked_pair(model, k.shifted(dir, h), &r0, ordering)?;
        let (_, rm, lm) = locked_pair(model, k.shifted(dir, -h), &r0, ordering)?;
        let s = Complex64::new(1.0 / (2.0 * h), 0.0);
        dr[dir.index()] = (&rp - &rm) * s;
        dl[dir.index()] = (&lp - &lm) * s;
        dlt[dir.index()] = (unit(lp) - unit(lm)) * s;
    }
    let lnorm2 = l.norm_squared();
    let mut qr = [ZERO; 2];
    let mut ql = [ZERO; 2];
    for mu in 0..2 {
        qr[mu] = I * r.dotc(&dr[mu]) - I * l.dotc(&dr[mu]);
        ql[mu] = I * l.dotc(&dl[mu]) / lnorm2 - I * r.dotc(&dl[mu]);
    }
    Ok(FiniteDifferenceGeometry {
        qgt_rr: projected(&dr, &r, &dr, &r),
        qgt_ll: projected(&dlt, &lt, &dlt, &lt),
        qgt_lr: projected(&dl, &l, &dr, &r),
        qgt_rl: projected(&dr, &r, &dl, &l),
        anomalous_r: qr,
        anomalous_l: ql,
    })
}

/// Gauge-invariant Q^R at k + s e_mu for the band continuing `reference`.
fn anomalous_r_near(model: &dyn BlochModel, k: KPoint, reference: &DVector<Complex64>, ordering: BandOrdering) -> Result<[Complex64; 2]> {
    let es = eigensystem(&model.hamiltonian(k)?, ordering)?;
    let n = (0..es.dim())
        .max_by(|&a, &b| (reference.dotc(&es.r(a)).norm() / es.r(a).norm()).total_cmp(&(reference.dotc(&es.r(b)).norm() / es.r(b).norm())))
        .unwrap_or(0);
    anomalous_connection(&es, &derivatives(model, k)?, n, Side::R)
}

/// Pointwise divergence d_x Q^R_x + d_y Q^R_y by central differences of step h.
pub fn anomalous_divergence(model: &dyn BlochModel, k: KPoint, band: usize, ordering: BandOrdering, h: f64) -> Result<Complex64> {
    let es = eigensystem(&model.hamiltonian(k)?, ordering)?;
    let r0 = es.r(band);
    let mut div = ZERO;
    for dir in Direction::ALL {
        let p = anomalous_r_near(model, k.shifted(dir, h), &r0, ordering)?;
        let m = anomalous_r_near(model, k.shifted(dir, -h), &r0, ordering)?;
        div += (p[dir.index()] - m[dir.index()]) / (2.0 * h);
    }
    Ok(div)
}

/// BZ Riemann sum of the divergence of the anomalous connection.
pub fn divergence_integral(model: &dyn BlochModel, band: usize, ordering: BandOrdering, n: usize, h: f64) -> Result<Complex64> {
    let vals = map_mesh(n, n, |k| anomalous_divergence(model, k, band, ordering, h))?;
    let area = (2.0 * std::f64::consts::PI / n as f64).powi(2);
    Ok(crate::numeric::compensated_sum_complex(vals) * area)
}
