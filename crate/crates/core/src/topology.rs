//! Non-Hermitian Chern numbers from biorthogonal link variables and from
//! the integrated curvature, plus the integrals entering the Chern bounds.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{map_mesh, GeometryGrid};
use crate::models::{mesh_point, BlochModel};
use crate::numeric::{compensated_sum, compensated_sum_complex};
use crate::spectra::{eigensystem, BandOrdering};

/// Links with modulus below this are treated as collapsed.
pub const LINK_TOL: f64 = 1e-6;

/// Largest accepted distance of the plaquette phase sum from an integer.
pub const RESIDUE_TOL: f64 = 1e-3;

/// Relative tolerance of the local curvature inequality.
pub const LOCAL_BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    /// U = <L(k)|R(k')>.
    #[default]
    LeftRight,
    /// U = <R(k)|L(k')>.
    RightLeft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChernResult {
    pub chern_plaquette: i64,
    pub chern_plaquette_rl: i64,
    /// Unrounded plaquette phase sum divided by 2 pi.
    pub plaquette_sum: f64,
    /// Real part of the curvature Riemann sum over 2 pi.
    pub chern_curvature: f64,
    /// Imaginary part of the same sum (vanishes in the continuum).
    pub chern_curvature_imag: f64,
    pub curvature_abs_integral: f64,
    pub qgt_bound_integral: f64,
    pub grid_size: (usize, usize),
}

/// Right and left eigenvector of one band at one mesh point.
pub type BandVectors = (DVector<Complex64>, DVector<Complex64>);

fn band_vectors(model: &dyn BlochModel, band: usize, ordering: BandOrdering, nx: usize, ny: usize) -> Result<Vec<BandVectors>> {
    if band >= model.dim() {
        return Err(Error::InvalidParams(format!("band {band} out of range")));
    }
    map_mesh(nx, ny, |k| {
        let es = eigensystem(&model.hamiltonian(k)?, ordering)?;
        Ok((es.r(band), es.l(band)))
    })
}

/// Sum over plaquettes of the link phases divided by 2 pi (unrounded).
pub fn plaquette_phase_sum(model: &dyn BlochModel, band: usize, ordering: BandOrdering, nx: usize, ny: usize, kind: LinkKind) -> Result<f64> {
    plaquette_sum_from_vectors(&band_vectors(model, band, ordering, nx, ny)?, nx, ny, kind)
}

/// Same sum from precomputed vectors in row-major mesh order.
pub fn plaquette_sum_from_vectors(vecs: &[BandVectors], nx: usize, ny: usize, kind: LinkKind) -> Result<f64> {
    if vecs.len() != nx * ny {
        return Err(Error::InvalidParams(format!("{} vectors for a {nx}x{ny} mesh", vecs.len())));
    }
    let link = |a: usize, b: usize| -> Complex64 {
        match kind {
            LinkKind::LeftRight => vecs[a].1.dotc(&vecs[b].0),
            LinkKind::RightLeft => vecs[a].0.dotc(&vecs[b].1),
        }
    };
    let idx = |i: usize, j: usize| (i % nx) * ny + (j % ny);
    let mut phases = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let corners = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
            let mut prod = Complex64::new(1.0, 0.0);
            for c in 0..4 {
                let u = link(corners[c], corners[(c + 1) % 4]);
                if u.norm() < LINK_TOL {
                    let k = mesh_point(i, j, nx, ny);
                    return Err(Error::LinkCollapse { kx: k.kx, ky: k.ky, modulus: u.norm() });
                }
                prod *= u / u.norm();
            }
            phases.push(prod.arg());
        }
    }
    Ok(-compensated_sum(phases) / (2.0 * PI))
}

fn rounded(value: f64) -> Result<i64> {
    let c = value.round();
    if (value - c).abs() > RESIDUE_TOL {
        return Err(Error::NonIntegerResidue { value });
    }
    Ok(c as i64)
}

/// Integer Chern number from biorthogonal link variables.
pub fn chern_plaquette(model: &dyn BlochModel, band: usize, ordering: BandOrdering, nx: usize, ny: usize) -> Result<i64> {
    rounded(plaquette_phase_sum(model, band, ordering, nx, ny, LinkKind::LeftRight)?)
}

/// Complex curvature Riemann sum divided by 2 pi.
pub fn chern_from_curvature(grid: &GeometryGrid) -> Complex64 {
    compensated_sum_complex(grid.records.iter().map(|r| r.curvature)) * grid.cell_area() / (2.0 * PI)
}

/// Local margins |Q^RL_xy| + |Q^RL_yx| - |F| per mesh point.
pub fn local_margins(grid: &GeometryGrid) -> Vec<(f64, f64)> {
    grid.records
        .iter()
        .map(|r| (r.curvature.norm(), r.qgt_rl[0][1].norm() + r.qgt_rl[1][0].norm()))
        .collect()
}

/// Returns (integral of |F|, integral of |Q^RL_xy| + |Q^RL_yx|).
///
/// Fails with the offending k-points when the local inequality is violated
/// beyond roundoff.
pub fn bound_integrals(grid: &GeometryGrid) -> Result<(f64, f64)> {
    let margins = local_margins(grid);
    let bad: Vec<(usize, f64)> = margins
        .iter()
        .enumerate()
        .map(|(i, &(lhs, rhs))| (i, rhs - lhs))
        .filter(|&(i, m)| m < -LOCAL_BOUND_TOL * margins[i].1.max(f64::MIN_POSITIVE))
        .collect();
    if !bad.is_empty() {
        let worst = bad.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
        return Err(Error::BoundViolation { count: bad.len(), worst });
    }
    let area = grid.cell_area();
    Ok((
        compensated_sum(margins.iter().map(|m| m.0)) * area,
        compensated_sum(margins.iter().map(|m| m.1)) * area,
    ))
}

/// Plaquette, curvature and bound integrals on one mesh.
pub fn chern_result(model: &dyn BlochModel, grid: &GeometryGrid, ordering: BandOrdering) -> Result<ChernResult> {
    let (nx, ny) = (grid.nx, grid.ny);
    let lr = plaquette_phase_sum(model, grid.band, ordering, nx, ny, LinkKind::LeftRight)?;
    let rl = plaquette_phase_sum(model, grid.band, ordering, nx, ny, LinkKind::RightLeft)?;
    let c = chern_from_curvature(grid);
    let (abs_f, q) = bound_integrals(grid)?;
    Ok(ChernResult {
        chern_plaquette: rounded(lr)?,
        chern_plaquette_rl: rounded(rl)?,
        plaquette_sum: lr,
        chern_curvature: c.re,
        chern_curvature_imag: c.im,
        curvature_abs_integral: abs_f,
        qgt_bound_integral: q,
        grid_size: (nx, ny),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::scan_geometry;
    use crate::models::{RiceMele, RmParams};

    const ORD: BandOrdering = BandOrdering::DescendingReal;

    #[test]
    fn hermitian_rice_mele_is_topological() {
        let m = RiceMele::new(RmParams { gamma: 0.0, ..RmParams::default() }).unwrap();
        assert_eq!(chern_plaquette(&m, 0, ORD, 24, 24).unwrap().abs(), 1);
    }

    #[test]
    fn large_offset_is_trivial() {
        let m = RiceMele::new(RmParams { dz_offset: 5.0, ..RmParams::default() }).unwrap();
        assert_eq!(chern_plaquette(&m, 0, ORD, 24, 24).unwrap(), 0);
    }

    #[test]
    fn plaquette_sign_matches_curvature() {
        let m = RiceMele::new(RmParams::default()).unwrap();
        let c = chern_plaquette(&m, 0, ORD, 32, 32).unwrap();
        let g = scan_geometry(&m, 0, ORD, 48, 48).unwrap();
        assert!((chern_from_curvature(&g).re - c as f64).abs() < 0.05);
    }

    #[test]
    fn coarse_mesh_on_flat_model_is_zero() {
        let m = crate::models::FourierModel::new(2, vec![(0, 0, crate::models::pauli_z())]).unwrap();
        assert_eq!(chern_plaquette(&m, 0, ORD, 8, 8).unwrap(), 0);
    }
}
