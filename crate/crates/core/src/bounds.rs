//! Point-wise and integrated checkers for the geometric inequalities.
//!
//! Every entry stores both sides of `lhs <= rhs` and the raw margin
//! `rhs - lhs`; a report passes when its worst margin is at least
//! `-tolerance`, where the tolerance is relative to the largest magnitude
//! seen in the report.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeometryGrid, GeometryRecord, Tensor2};
use crate::topology::ChernResult;

/// Default relative tolerance for pass/fail decisions.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Hermiticity residue accepted by [`check_psd`], relative to the entries.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundName {
    LocalCurvature,
    #[serde(rename = "QGTInequality")]
    QgtInequality,
    #[serde(rename = "PSD_RR")]
    PsdRr,
    #[serde(rename = "PSD_LL")]
    PsdLl,
    ChernChain,
    OpticalWeight,
    AbsorptivePSD,
    AbsorptiveReIm,
}

/// One checked inequality `lhs <= rhs` at a k-point or frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundPoint {
    /// (kx, ky), (kx, ky, mu, nu), (omega,) or an index, depending on the bound.
    pub at: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl BoundPoint {
    pub fn new(at: Vec<f64>, lhs: f64, rhs: f64) -> Self {
        BoundPoint { at, lhs, rhs, margin: rhs - lhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundReport {
    pub bound_name: BoundName,
    pub per_point: Vec<BoundPoint>,
    pub passed: bool,
    pub worst_margin: f64,
    pub tolerance: f64,
    /// False for recorded-only quantities that do not gate the exit status.
    pub asserted: bool,
}

impl BoundReport {
    /// Builds a report; the tolerance is `rel_tol` times the largest |lhs| or |rhs|.
    pub fn from_points(name: BoundName, per_point: Vec<BoundPoint>, rel_tol: f64) -> Self {
        let scale = per_point.iter().map(|p| p.lhs.abs().max(p.rhs.abs())).fold(0.0, f64::max);
        Self::with_tolerance(name, per_point, rel_tol * scale)
    }

    pub fn with_tolerance(name: BoundName, per_point: Vec<BoundPoint>, tolerance: f64) -> Self {
        let worst_margin = per_point.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
        let worst_margin = if worst_margin.is_finite() { worst_margin } else { 0.0 };
        BoundReport {
            bound_name: name,
            passed: worst_margin >= -tolerance,
            per_point,
            worst_margin,
            tolerance,
            asserted: true,
        }
    }

    pub fn violations(&self) -> impl Iterator<Item = &BoundPoint> {
        self.per_point.iter().filter(move |p| p.margin < -self.tolerance)
    }

    pub fn to_error(&self) -> Option<Error> {
        (!self.passed).then(|| Error::BoundViolation { count: self.violations().count(), worst: self.worst_margin })
    }
}

/// |F| <= |Q^RL_xy| + |Q^RL_yx| at every mesh point.
pub fn check_local_curvature_bound(grid: &GeometryGrid) -> BoundReport {
    local_curvature_report(grid, DEFAULT_REL_TOL)
}

pub fn local_curvature_report(grid: &GeometryGrid, rel_tol: f64) -> BoundReport {
    let pts = grid
        .records
        .iter()
        .map(|r| BoundPoint::new(vec![r.k.kx, r.k.ky], r.curvature.norm(), r.qgt_rl[0][1].norm() + r.qgt_rl[1][0].norm()))
        .collect();
    BoundReport::from_points(BoundName::LocalCurvature, pts, rel_tol)
}

/// |Q^RL_{mu nu}|^2 <= N (Q^RR_mumu + |Q^R_mu|^2)(Q^LL_nunu + |Q^L_nu|^2) for the
/// four index pairs. With `ablate` the norm product N is dropped.
pub fn check_qgt_inequality(rec: &GeometryRecord, ablate: bool) -> Vec<BoundPoint> {
    let factor = if ablate { 1.0 } else { rec.norm_product };
    let mut out = Vec::with_capacity(4);
    for mu in 0..2 {
        for nu in 0..2 {
            let right = rec.qgt_rr[mu][mu].re + rec.anomalous_r[mu].norm_sqr();
            let left = rec.qgt_ll[nu][nu].re + rec.anomalous_l[nu].norm_sqr();
            out.push(BoundPoint::new(
                vec![rec.k.kx, rec.k.ky, mu as f64, nu as f64],
                rec.qgt_rl[mu][nu].norm_sqr(),
                factor * right * left,
            ));
        }
    }
    out
}

pub fn qgt_inequality_report(grid: &GeometryGrid, ablate: bool, rel_tol: f64) -> BoundReport {
    let pts = grid.records.iter().flat_map(|r| check_qgt_inequality(r, ablate)).collect();
    BoundReport::from_points(BoundName::QgtInequality, pts, rel_tol)
}

/// Eigenvalues (ascending) of a 2x2 Hermitian matrix.
pub fn hermitian_eigenvalues(q: &Tensor2) -> [f64; 2] {
    let mean = 0.5 * (q[0][0].re + q[1][1].re);
    let half = 0.5 * (q[0][0].re - q[1][1].re);
    let r = half.hypot(q[0][1].norm());
    [mean - r, mean + r]
}

fn hermiticity_residue(q: &Tensor2) -> f64 {
    let scale = q.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let res = q[0][0].im.abs().max(q[1][1].im.abs()).max((q[0][1] - q[1][0].conj()).norm());
    if scale > 1.0 {
        res / scale
    } else {
        res
    }
}

/// Minimum eigenvalue of a Hermitian 2x2; lhs is 0 and rhs the eigenvalue.
pub fn check_psd(q: &Tensor2) -> Result<BoundPoint> {
    let residue = hermiticity_residue(q);
    if residue > HERMITIAN_TOL {
        return Err(Error::NonHermitianInput { residue });
    }
    Ok(BoundPoint::new(vec![], 0.0, hermitian_eigenvalues(q)[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    RightRight,
    LeftLeft,
}

/// PSD of Q^RR or Q^LL on the mesh; the tolerance is `rel_tol` times the largest trace.
pub fn psd_report(grid: &GeometryGrid, family: Family, rel_tol: f64) -> Result<BoundReport> {
    let mut pts = Vec::with_capacity(grid.records.len());
    let mut max_trace: f64 = 0.0;
    for r in &grid.records {
        let q = match family {
            Family::RightRight => &r.qgt_rr,
            Family::LeftLeft => &r.qgt_ll,
        };
        max_trace = max_trace.max(q[0][0].re + q[1][1].re);
        let mut p = check_psd(q)?;
        p.at = vec![r.k.kx, r.k.ky];
        pts.push(p);
    }
    let name = match family {
        Family::RightRight => BoundName::PsdRr,
        Family::LeftLeft => BoundName::PsdLl,
    };
    Ok(BoundReport::with_tolerance(name, pts, rel_tol * max_trace))
}

/// 2 pi |C| <= int |F| <= int (|Q^RL_xy| + |Q^RL_yx|).
pub fn check_chern_chain(c: &ChernResult) -> BoundReport {
    let pts = vec![
        BoundPoint::new(vec![0.0], 2.0 * PI * c.chern_plaquette.unsigned_abs() as f64, c.curvature_abs_integral),
        BoundPoint::new(vec![1.0], c.curvature_abs_integral, c.qgt_bound_integral),
    ];
    BoundReport::from_points(BoundName::ChernChain, pts, DEFAULT_REL_TOL)
}

/// Checks sum_mu int W^{mu mu} / 2 pi >= (pi + min arg) |C|.
pub fn check_optical_weight_bound(weight_trace: f64, chern: i64, arg_infimum: f64) -> Result<BoundReport> {
    if !(-PI..=0.0).contains(&arg_infimum) {
        return Err(Error::BranchViolation { arg: arg_infimum });
    }
    let pts = vec![BoundPoint::new(vec![arg_infimum], (PI + arg_infimum) * chern.unsigned_abs() as f64, weight_trace / (2.0 * PI))];
    Ok(BoundReport::from_points(BoundName::OpticalWeight, pts, DEFAULT_REL_TOL))
}

/// Minimum eigenvalue of Pi^abs(omega) per frequency sample.
pub fn check_absorptive_psd(samples: &[(f64, Tensor2)]) -> BoundReport {
    let mut scale: f64 = 0.0;
    let pts = samples
        .iter()
        .map(|(w, q)| {
            scale = scale.max(q.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max));
            BoundPoint::new(vec![*w], 0.0, hermitian_eigenvalues(q)[0])
        })
        .collect();
    BoundReport::with_tolerance(BoundName::AbsorptivePSD, pts, DEFAULT_REL_TOL * scale)
}

/// Records |Im Pi^abs_01| against Re Pi^abs_01 where Pi^abs is PSD with a
/// nonnegative diagonal. Reported only; the elementwise reading is not a theorem.
pub fn absorptive_re_im_report(samples: &[(f64, Tensor2)]) -> BoundReport {
    let pts = samples
        .iter()
        .filter(|(_, q)| hermitian_eigenvalues(q)[0] >= 0.0 && q[0][0].re >= 0.0 && q[1][1].re >= 0.0)
        .map(|(w, q)| BoundPoint::new(vec![*w], q[0][1].im.abs(), q[0][1].re))
        .collect();
    let mut r = BoundReport::from_points(BoundName::AbsorptiveReIm, pts, DEFAULT_REL_TOL);
    r.asserted = false;
    r
}

/// Convenience for constructing test tensors.
pub fn tensor(a: [[(f64, f64); 2]; 2]) -> Tensor2 {
    a.map(|row| row.map(|(re, im)| Complex64::new(re, im)))
}
