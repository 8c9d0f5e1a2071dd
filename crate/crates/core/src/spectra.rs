//! Biorthogonal eigensystems of non-Hermitian matrices.

use std::cmp::Ordering;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::CMat;

/// Relative gap below which two eigenvalues are treated as coalescing.
pub const GAP_TOL: f64 = 1e-8;
/// Condition number of the right overlap matrix above which it is rejected.
pub const MAX_OVERLAP_COND: f64 = 1e12;

const MAX_QR_SWEEPS: usize = 60;

/// Rule used to number the bands at each k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BandOrdering {
    /// Descending Im(e), ties broken by ascending Re(e).
    #[default]
    SlowestDecaying,
    /// Descending Re(e).
    DescendingReal,
    /// Ascending Re(e).
    AscendingReal,
}

impl BandOrdering {
    fn compare(self, a: Complex64, b: Complex64) -> Ordering {
        let tie_tol = 1e-12 * (1.0 + a.norm().max(b.norm()));
        match self {
            BandOrdering::SlowestDecaying => {
                if (a.im - b.im).abs() > tie_tol {
                    b.im.total_cmp(&a.im)
                } else {
                    a.re.total_cmp(&b.re)
                }
            }
            BandOrdering::DescendingReal => b.re.total_cmp(&a.re),
            BandOrdering::AscendingReal => a.re.total_cmp(&b.re),
        }
    }
}

/// Paired right and left eigenvectors with <L_n|R_m> = delta_nm.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub energies: Vec<Complex64>,
    /// Right eigenvectors as columns.
    pub right: CMat,
    /// Left eigenvectors as columns (eigenvectors of H^dagger).
    pub left: CMat,
    /// I_nm = <R_n|R_m>.
    pub overlap_right: CMat,
    /// <L_n|L_m>, equal to the inverse of I.
    pub overlap_left: CMat,
}

/// Residues of the structural identities every eigensystem must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residues {
    pub biorthonormality: f64,
    pub completeness: f64,
    pub reconstruction: f64,
    pub overlap_inverse: f64,
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn r(&self, n: usize) -> DVector<Complex64> {
        self.right.column(n).into_owned()
    }

    pub fn l(&self, n: usize) -> DVector<Complex64> {
        self.left.column(n).into_owned()
    }

    /// Smallest pairwise eigenvalue distance.
    pub fn min_gap(&self) -> f64 {
        min_gap(&self.energies)
    }

    /// |R_n> -> c_n |R_n>, |L_n> -> |L_n> / c_n^*.
    pub fn rescaled(&self, c: &[Complex64]) -> Eigensystem {
        let mut right = self.right.clone();
        let mut left = self.left.clone();
        for (n, cn) in c.iter().enumerate() {
            for i in 0..right.nrows() {
                right[(i, n)] *= cn;
                left[(i, n)] /= cn.conj();
            }
        }
        let overlap_right = right.adjoint() * &right;
        let overlap_left = left.adjoint() * &left;
        Eigensystem { energies: self.energies.clone(), right, left, overlap_right, overlap_left }
    }

    pub fn residues(&self, h: &CMat) -> Residues {
        let n = self.dim();
        let id = CMat::identity(n, n);
        let bio = self.left.adjoint() * &self.right - &id;
        let comp = &self.right * self.left.adjoint() - &id;
        let diag = CMat::from_diagonal(&DVector::from_vec(self.energies.clone()));
        let recon = &self.right * diag * self.left.adjoint() - h;
        let inv = &self.overlap_left * &self.overlap_right - &id;
        Residues {
            biorthonormality: max_abs(&bio),
            completeness: max_abs(&comp),
            reconstruction: max_abs(&recon) / max_abs(h).max(f64::MIN_POSITIVE),
            overlap_inverse: max_abs(&inv),
        }
    }

    /// Estimated 1-norm condition number of the right overlap matrix.
    pub fn overlap_condition(&self) -> f64 {
        one_norm(&self.overlap_right) * one_norm(&self.overlap_left)
    }
}

fn min_gap(e: &[Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            gap = gap.min((e[i] - e[j]).norm());
        }
    }
    gap
}

fn check_gap(e: &[Complex64]) -> Result<()> {
    let scale = e.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let gap = min_gap(e);
    if !(gap >= GAP_TOL * scale) {
        return Err(Error::ExceptionalPoint { gap });
    }
    Ok(())
}

/// Makes the first non-negligible component real-positive and the vector unit norm.
fn fix_phase(v: &mut DVector<Complex64>) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() > 1e-10 * norm).copied().unwrap_or(Complex64::new(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    *v *= phase / norm;
}

fn finish(energies: Vec<Complex64>, rights: Vec<DVector<Complex64>>, lefts: Vec<DVector<Complex64>>) -> Result<Eigensystem> {
    let right = CMat::from_columns(&rights);
    let left = CMat::from_columns(&lefts);
    let overlap_right = right.adjoint() * &right;
    let overlap_left = left.adjoint() * &left;
    let es = Eigensystem { energies, right, left, overlap_right, overlap_left };
    let cond = es.overlap_condition();
    if !(cond <= MAX_OVERLAP_COND) {
        return Err(Error::IllConditioned { cond });
    }
    Ok(es)
}

fn sorted_indices(e: &[Complex64], ordering: BandOrdering) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..e.len()).collect();
    idx.sort_by(|&a, &b| ordering.compare(e[a], e[b]));
    idx
}

/// Closed-form eigensystem of a 2x2 matrix; left vectors from the Gram construction.
pub fn eigensystem_two_band(h: &CMat, ordering: BandOrdering) -> Result<Eigensystem> {
    if h.nrows() != 2 || h.ncols() != 2 {
        return Err(Error::InvalidParams("two-band solver needs a 2x2 matrix".into()));
    }
    let (a, b, c, d) = (h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
    let mean = (a + d) / 2.0;
    let q = ((a - d) * (a - d) / 4.0 + b * c).sqrt();
    let raw = [mean + q, mean - q];
    check_gap(&raw)?;
    let idx = sorted_indices(&raw, ordering);
    let energies: Vec<Complex64> = idx.iter().map(|&i| raw[i]).collect();
    let rights: Vec<DVector<Complex64>> = energies
        .iter()
        .map(|&lam| {
            let v1 = DVector::from_vec(vec![b, lam - a]);
            let v2 = DVector::from_vec(vec![lam - d, c]);
            let mut v = if v1.norm() >= v2.norm() { v1 } else { v2 };
            fix_phase(&mut v);
            v
        })
        .collect();
    let lefts = (0..2)
        .map(|n| {
            let (rn, rm) = (&rights[n], &rights[1 - n]);
            let proj = rm.dotc(rn) / rm.dotc(rm);
            let u = rn - rm * proj;
            let norm = u.dotc(rn);
            u / norm.conj()
        })
        .collect();
    finish(energies, rights, lefts)
}

/// Householder reduction to upper Hessenberg form: returns (H, Q) with A = Q H Q^dagger.
fn hessenberg(a: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = CMat::identity(n, n);
    for k in 0..n.saturating_sub(2) {
        let x: DVector<Complex64> = h.view((k + 1, k), (n - k - 1, 1)).column(0).into_owned();
        let xnorm = x.norm();
        if xnorm == 0.0 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { Complex64::new(1.0, 0.0) };
        let mut v = x.clone();
        v[0] += phase * xnorm;
        let vnorm = v.norm();
        if vnorm == 0.0 {
            continue;
        }
        v /= Complex64::new(vnorm, 0.0);
        // H <- P H P with P = 1 - 2 v v^dagger acting on rows/cols k+1..n
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for i in 0..v.len() {
                s += v[i].conj() * h[(k + 1 + i, j)];
            }
            for i in 0..v.len() {
                h[(k + 1 + i, j)] -= v[i] * s * 2.0;
            }
        }
        for m in [&mut h, &mut q] {
            for i in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for l in 0..v.len() {
                    s += m[(i, k + 1 + l)] * v[l];
                }
                for l in 0..v.len() {
                    m[(i, k + 1 + l)] -= s * v[l].conj() * 2.0;
                }
            }
        }
        for i in k + 2..n {
            h[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
    (h, q)
}

struct Givens {
    c: f64,
    s: Complex64,
}

impl Givens {
    fn new(x: Complex64, y: Complex64) -> Givens {
        let norm = x.norm().hypot(y.norm());
        if norm == 0.0 {
            return Givens { c: 1.0, s: Complex64::new(0.0, 0.0) };
        }
        if x.norm() == 0.0 {
            return Givens { c: 0.0, s: Complex64::new(1.0, 0.0) };
        }
        Givens { c: x.norm() / norm, s: (x / x.norm()) * y.conj() / norm }
    }

    fn rows(&self, m: &mut CMat, p: usize, q: usize, cols: std::ops::Range<usize>) {
        for j in cols {
            let (a, b) = (m[(p, j)], m[(q, j)]);
            m[(p, j)] = a * self.c + self.s * b;
            m[(q, j)] = -self.s.conj() * a + b * self.c;
        }
    }

    fn cols(&self, m: &mut CMat, p: usize, q: usize, rows: std::ops::Range<usize>) {
        for i in rows {
            let (a, b) = (m[(i, p)], m[(i, q)]);
            m[(i, p)] = a * self.c + b * self.s.conj();
            m[(i, q)] = -a * self.s + b * self.c;
        }
    }
}

/// Complex Schur decomposition A = Z T Z^dagger by shifted QR on the Hessenberg form.
pub fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    let n = a.nrows();
    let (mut t, mut z) = hessenberg(a);
    let anorm = max_abs(a).max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let mut hi = n.saturating_sub(1);
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let s = t[(lo - 1, lo - 1)].norm() + t[(lo, lo)].norm();
            let s = if s == 0.0 { anorm } else { s };
            if t[(lo, lo - 1)].norm() <= eps * s {
                t[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if iter > MAX_QR_SWEEPS || total > MAX_QR_SWEEPS * n.max(1) * 4 {
            return Err(Error::NonConvergence { iterations: total });
        }
        let shift = if iter.is_multiple_of(11) {
            // exceptional shift to break cycles
            t[(hi, hi)] + Complex64::new(t[(hi, hi - 1)].norm(), 0.0)
        } else {
            let (p, q, r, s) = (t[(hi - 1, hi - 1)], t[(hi - 1, hi)], t[(hi, hi - 1)], t[(hi, hi)]);
            let mean = (p + s) / 2.0;
            let disc = ((p - s) * (p - s) / 4.0 + q * r).sqrt();
            let (m1, m2) = (mean + disc, mean - disc);
            if (m1 - s).norm() <= (m2 - s).norm() { m1 } else { m2 }
        };
        let mut x = t[(lo, lo)] - shift;
        let mut y = t[(lo + 1, lo)];
        for k in lo..hi {
            let g = Givens::new(x, y);
            let first_col = if k > lo { k - 1 } else { lo };
            g.rows(&mut t, k, k + 1, first_col..n);
            g.cols(&mut t, k, k + 1, 0..(k + 3).min(hi + 1));
            g.cols(&mut z, k, k + 1, 0..n);
            if k > lo {
                t[(k + 1, k - 1)] = Complex64::new(0.0, 0.0);
            }
            if k + 1 < hi {
                x = t[(k + 1, k)];
                y = t[(k + 2, k)];
            }
        }
    }
    Ok((t, z))
}

/// Right eigenvectors of A from its Schur form, as unnormalized columns.
fn schur_vectors(t: &CMat, z: &CMat) -> Vec<DVector<Complex64>> {
    let n = t.nrows();
    let small = f64::EPSILON * max_abs(t).max(f64::MIN_POSITIVE);
    (0..n)
        .map(|k| {
            let lam = t[(k, k)];
            let mut y = DVector::from_element(n, Complex64::new(0.0, 0.0));
            y[k] = Complex64::new(1.0, 0.0);
            for i in (0..k).rev() {
                let mut s = Complex64::new(0.0, 0.0);
                for j in i + 1..=k {
                    s += t[(i, j)] * y[j];
                }
                let mut den = t[(i, i)] - lam;
                if den.norm() < small {
                    den = Complex64::new(small, 0.0);
                }
                y[i] = -s / den;
            }
            z * y
        })
        .collect()
}

/// Dense eigensystem of an N x N matrix via Hessenberg reduction and shifted QR.
/// Left vectors come from the adjoint problem, paired by conjugate eigenvalue.
pub fn eigensystem_general(h: &CMat, ordering: BandOrdering) -> Result<Eigensystem> {
    let n = h.nrows();
    if n != h.ncols() || n == 0 {
        return Err(Error::InvalidParams("eigensystem needs a square matrix".into()));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParams("matrix has non-finite entries".into()));
    }
    let (t, z) = schur(h)?;
    let raw: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    check_gap(&raw)?;
    let vecs = schur_vectors(&t, &z);

    let hd = h.adjoint();
    let (ta, za) = schur(&hd)?;
    let raw_adj: Vec<Complex64> = (0..n).map(|i| ta[(i, i)]).collect();
    let vecs_adj = schur_vectors(&ta, &za);

    let mut taken = vec![false; n];
    let mut pair = vec![0usize; n];
    for (i, e) in raw.iter().enumerate() {
        let target = e.conj();
        let best = (0..n)
            .filter(|&j| !taken[j])
            .min_by(|&a, &b| (raw_adj[a] - target).norm().total_cmp(&(raw_adj[b] - target).norm()))
            .ok_or(Error::NonConvergence { iterations: 0 })?;
        taken[best] = true;
        pair[i] = best;
    }

    let idx = sorted_indices(&raw, ordering);
    let mut energies = Vec::with_capacity(n);
    let mut rights = Vec::with_capacity(n);
    let mut lefts = Vec::with_capacity(n);
    for &i in &idx {
        let mut r = vecs[i].clone();
        fix_phase(&mut r);
        let w = &vecs_adj[pair[i]];
        let ov = w.dotc(&r);
        if ov.norm() < 1e-14 * w.norm() {
            return Err(Error::ExceptionalPoint { gap: ov.norm() });
        }
        energies.push(raw[i]);
        lefts.push(w / ov.conj());
        rights.push(r);
    }
    finish(energies, rights, lefts)
}

/// Dispatches to the closed form for N = 2 and the dense solver otherwise.
pub fn eigensystem(h: &CMat, ordering: BandOrdering) -> Result<Eigensystem> {
    if h.nrows() == 2 {
        eigensystem_two_band(h, ordering)
    } else {
        eigensystem_general(h, ordering)
    }
}

/// Right overlap matrix I and its inverse, checked against the left Gram matrix.
pub fn overlap_matrices(es: &Eigensystem) -> Result<(CMat, CMat)> {
    let cond = es.overlap_condition();
    if !(cond <= MAX_OVERLAP_COND) {
        return Err(Error::IllConditioned { cond });
    }
    let inv = es
        .overlap_right
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let diff = max_abs(&(&inv - &es.overlap_left)) / max_abs(&inv).max(1.0);
    if diff > 1e-9 * cond.max(1.0) {
        return Err(Error::IllConditioned { cond });
    }
    Ok((es.overlap_right.clone(), inv))
}
