//! Non-Hermitian Bloch Hamiltonians and their momentum derivatives.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Default central-difference step in momentum.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Relative tolerance on |d.d| below which a pseudospin model is degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    X,
    Y,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::X, Direction::Y];

    pub fn index(self) -> usize {
        match self {
            Direction::X => 0,
            Direction::Y => 1,
        }
    }
}

/// A point of the two-dimensional Brillouin zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub kx: f64,
    pub ky: f64,
}

fn reduce(k: f64) -> f64 {
    let r = (k + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can return exactly 2pi for tiny negative inputs
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

impl KPoint {
    /// Builds a k-point reduced to [-pi, pi).
    pub fn new(kx: f64, ky: f64) -> Self {
        KPoint { kx: reduce(kx), ky: reduce(ky) }
    }

    /// Builds a k-point without reduction (stencil points may leave the zone).
    pub fn raw(kx: f64, ky: f64) -> Self {
        KPoint { kx, ky }
    }

    pub fn shifted(self, dir: Direction, h: f64) -> Self {
        match dir {
            Direction::X => KPoint::raw(self.kx + h, self.ky),
            Direction::Y => KPoint::raw(self.kx, self.ky + h),
        }
    }

    pub fn component(self, dir: Direction) -> f64 {
        match dir {
            Direction::X => self.kx,
            Direction::Y => self.ky,
        }
    }
}

/// Point (i, j) of the uniform nx-by-ny mesh covering [-pi, pi)^2.
pub fn mesh_point(i: usize, j: usize, nx: usize, ny: usize) -> KPoint {
    KPoint::raw(
        -PI + 2.0 * PI * i as f64 / nx as f64,
        -PI + 2.0 * PI * j as f64 / ny as f64,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DerivativeKind {
    #[default]
    Analytic,
    CentralDifference { step: f64 },
}

/// A map from the Brillouin zone to N-by-N Hamiltonians.
pub trait BlochModel: Send + Sync {
    fn dim(&self) -> usize;

    fn hamiltonian(&self, k: KPoint) -> Result<CMat>;

    /// Closed-form derivative, if the model provides one.
    fn analytic_derivative(&self, _k: KPoint, _dir: Direction) -> Option<Result<CMat>> {
        None
    }

    fn derivative_kind(&self) -> DerivativeKind {
        DerivativeKind::Analytic
    }

    fn derivative(&self, k: KPoint, dir: Direction) -> Result<CMat> {
        match self.derivative_kind() {
            DerivativeKind::Analytic => match self.analytic_derivative(k, dir) {
                Some(d) => d,
                None => central_difference(self, k, dir, DEFAULT_FD_STEP),
            },
            DerivativeKind::CentralDifference { step } => central_difference(self, k, dir, step),
        }
    }
}

pub fn central_difference<M: BlochModel + ?Sized>(
    model: &M,
    k: KPoint,
    dir: Direction,
    h: f64,
) -> Result<CMat> {
    let hp = model.hamiltonian(k.shifted(dir, h))?;
    let hm = model.hamiltonian(k.shifted(dir, -h))?;
    Ok((hp - hm) / Complex64::new(2.0 * h, 0.0))
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[0.0.into(), 1.0.into(), 1.0.into(), 0.0.into()])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[0.0.into(), -I, I, 0.0.into()])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[1.0.into(), 0.0.into(), 0.0.into(), (-1.0).into()])
}

/// d.sigma for a complex 3-vector d.
pub fn d_dot_sigma(d: &[Complex64; 3]) -> CMat {
    CMat::from_row_slice(2, 2, &[d[2], d[0] - I * d[1], d[0] + I * d[1], -d[2]])
}

fn dot(a: &[Complex64; 3], b: &[Complex64; 3]) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RmVariant {
    /// d_x = (t + delta cos kx)(1 + cos ky); exceptional points at t = delta = gamma = 1.
    Uniform,
    /// d_x = t + delta cos kx + (t - delta cos kx) cos ky; gapped at the defaults.
    #[default]
    Alternating,
}

/// Parameters of the non-Hermitian Rice-Mele family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmParams {
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(rename = "Delta", default = "one")]
    pub big_delta: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(rename = "Gamma", default)]
    pub big_gamma: f64,
    #[serde(default)]
    pub variant: RmVariant,
    /// Uniform offset added to d_z; drives the model into a trivial phase.
    #[serde(default)]
    pub dz_offset: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for RmParams {
    fn default() -> Self {
        RmParams {
            t: 1.0,
            delta: 1.0,
            big_delta: 1.0,
            gamma: 1.0,
            big_gamma: 0.0,
            variant: RmVariant::Alternating,
            dz_offset: 0.0,
        }
    }
}

impl RmParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.t, self.delta, self.big_delta, self.gamma, self.big_gamma, self.dz_offset];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite Rice-Mele parameter".into()));
        }
        if self.gamma < 0.0 || self.big_gamma < 0.0 {
            return Err(Error::InvalidParams("gamma and Gamma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_hermitian(&self) -> bool {
        self.gamma == 0.0 && self.big_gamma == 0.0
    }
}

/// Complex pseudospin vector of the Rice-Mele family.
pub fn rm_d_vector(k: KPoint, p: &RmParams) -> [Complex64; 3] {
    let (sx, cx) = k.kx.sin_cos();
    let (sy, cy) = k.ky.sin_cos();
    let loss = Complex64::new(0.0, p.gamma / 2.0);
    match p.variant {
        RmVariant::Uniform => [
            (p.t + p.delta * cx + (p.t + p.delta * cx) * cy).into(),
            (p.t - p.delta * cx) * sy + loss,
            (-sx + p.dz_offset).into(),
        ],
        RmVariant::Alternating => [
            (p.t + p.delta * cx + (p.t - p.delta * cx) * cy).into(),
            (p.t - p.delta * cx) * sy + loss,
            (-p.big_delta * sx + p.dz_offset).into(),
        ],
    }
}

pub fn rm_d_derivative(k: KPoint, p: &RmParams, dir: Direction) -> [Complex64; 3] {
    let (sx, cx) = k.kx.sin_cos();
    let (sy, cy) = k.ky.sin_cos();
    let z = Complex64::new(0.0, 0.0);
    match (p.variant, dir) {
        (RmVariant::Uniform, Direction::X) => [
            (-p.delta * sx - p.delta * sx * cy).into(),
            (p.delta * sx * sy).into(),
            (-cx).into(),
        ],
        (RmVariant::Uniform, Direction::Y) => [
            (-(p.t + p.delta * cx) * sy).into(),
            ((p.t - p.delta * cx) * cy).into(),
            z,
        ],
        (RmVariant::Alternating, Direction::X) => [
            (-p.delta * sx + p.delta * sx * cy).into(),
            (p.delta * sx * sy).into(),
            (-p.big_delta * cx).into(),
        ],
        (RmVariant::Alternating, Direction::Y) => [
            (-(p.t - p.delta * cx) * sy).into(),
            ((p.t - p.delta * cx) * cy).into(),
            z,
        ],
    }
}

/// H(k) = (1 + i Gamma / (2 sqrt(d.d))) d.sigma with the principal square root.
#[derive(Debug, Clone)]
pub struct RiceMele {
    pub params: RmParams,
    pub derivative: DerivativeKind,
}

impl RiceMele {
    pub fn new(params: RmParams) -> Result<Self> {
        params.validate()?;
        Ok(RiceMele { params, derivative: DerivativeKind::Analytic })
    }

    pub fn with_derivative(mut self, kind: DerivativeKind) -> Self {
        self.derivative = kind;
        self
    }

    fn root(&self, k: KPoint, d: &[Complex64; 3]) -> Result<Complex64> {
        let s2 = dot(d, d);
        let p = &self.params;
        let model_scale = p.t.abs() + p.delta.abs() + p.big_delta.abs() + p.gamma / 2.0 + p.dz_offset.abs();
        let scale: f64 = d.iter().map(|c| c.norm_sqr()).sum::<f64>().max(model_scale * model_scale);
        if s2.norm() <= DEGENERACY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::DegeneratePoint { kx: k.kx, ky: k.ky, value: s2.norm() });
        }
        Ok(s2.sqrt())
    }
}

impl BlochModel for RiceMele {
    fn dim(&self) -> usize {
        2
    }

    fn hamiltonian(&self, k: KPoint) -> Result<CMat> {
        let d = rm_d_vector(k, &self.params);
        let s = self.root(k, &d)?;
        let pref = Complex64::new(1.0, 0.0) + I * self.params.big_gamma / (2.0 * s);
        Ok(d_dot_sigma(&d) * pref)
    }

    fn analytic_derivative(&self, k: KPoint, dir: Direction) -> Option<Result<CMat>> {
        let d = rm_d_vector(k, &self.params);
        let dd = rm_d_derivative(k, &self.params, dir);
        Some(self.root(k, &d).map(|s| {
            let pref = Complex64::new(1.0, 0.0) + I * self.params.big_gamma / (2.0 * s);
            let ds = dot(&d, &dd) / s;
            let dpref = -I * self.params.big_gamma * ds / (2.0 * s * s);
            d_dot_sigma(&dd) * pref + d_dot_sigma(&d) * dpref
        }))
    }

    fn derivative_kind(&self) -> DerivativeKind {
        self.derivative
    }
}

/// Three-band model with nonreciprocal hoppings and on-site loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreeBandParams {
    pub t: f64,
    pub g: f64,
    pub gamma: f64,
}

impl Default for ThreeBandParams {
    fn default() -> Self {
        ThreeBandParams { t: 0.6, g: 0.5, gamma: 0.4 }
    }
}

#[derive(Debug, Clone)]
pub struct ThreeBand {
    pub params: ThreeBandParams,
}

impl ThreeBand {
    fn assemble(&self, a: Complex64, ac: Complex64, b: Complex64, onsite: bool) -> CMat {
        let ThreeBandParams { t, g, gamma } = self.params;
        let z = Complex64::new(0.0, 0.0);
        let (fw, bw) = (t * (1.0 + g), t * (1.0 - g));
        let (d0, d1, d2, c) = if onsite {
            (Complex64::new(2.0, 0.0), Complex64::new(0.0, -gamma), Complex64::new(-2.0, -gamma), Complex64::new(0.3 * t, 0.0))
        } else {
            (z, z, z, z)
        };
        CMat::from_row_slice(3, 3, &[d0, a * fw, c, ac * bw, d1, b * fw, c, b * bw, d2])
    }
}

impl BlochModel for ThreeBand {
    fn dim(&self) -> usize {
        3
    }

    fn hamiltonian(&self, k: KPoint) -> Result<CMat> {
        let (sx, cx) = k.kx.sin_cos();
        let (sy, cy) = k.ky.sin_cos();
        let a = Complex64::new(cx, sy);
        Ok(self.assemble(a, a.conj(), (sx + cy).into(), true))
    }

    fn analytic_derivative(&self, k: KPoint, dir: Direction) -> Option<Result<CMat>> {
        let (sx, cx) = k.kx.sin_cos();
        let (sy, cy) = k.ky.sin_cos();
        let (a, b) = match dir {
            Direction::X => (Complex64::new(-sx, 0.0), Complex64::new(cx, 0.0)),
            Direction::Y => (Complex64::new(0.0, cy), Complex64::new(-sy, 0.0)),
        };
        Some(Ok(self.assemble(a, a.conj(), b, false)))
    }
}

/// One Fourier harmonic c * exp(i (nx kx + ny ky)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    #[serde(default)]
    pub nx: i32,
    #[serde(default)]
    pub ny: i32,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Raw-matrix model H(k) = sum_j M_j exp(i (nx_j kx + ny_j ky)).
#[derive(Debug, Clone)]
pub struct FourierModel {
    dim: usize,
    terms: Vec<(i32, i32, CMat)>,
}

impl FourierModel {
    pub fn new(dim: usize, terms: Vec<(i32, i32, CMat)>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParams("model dimension must be at least 2".into()));
        }
        if terms.iter().any(|(_, _, m)| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::InvalidParams("term matrix has the wrong shape".into()));
        }
        if terms.iter().any(|(_, _, m)| m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())) {
            return Err(Error::InvalidParams("non-finite matrix entry".into()));
        }
        Ok(FourierModel { dim, terms })
    }

    /// Pseudospin model d0 + d.sigma with each component a sum of harmonics.
    pub fn pseudospin(components: [&[Harmonic]; 4]) -> Result<Self> {
        let basis = [CMat::identity(2, 2), pauli_x(), pauli_y(), pauli_z()];
        let mut terms = Vec::new();
        for (sigma, harmonics) in basis.iter().zip(components) {
            for h in harmonics {
                terms.push((h.nx, h.ny, sigma * Complex64::new(h.re, h.im)));
            }
        }
        FourierModel::new(2, terms)
    }
}

impl BlochModel for FourierModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn hamiltonian(&self, k: KPoint) -> Result<CMat> {
        let mut h = CMat::zeros(self.dim, self.dim);
        for (nx, ny, m) in &self.terms {
            let phase = Complex64::from_polar(1.0, *nx as f64 * k.kx + *ny as f64 * k.ky);
            h += m * phase;
        }
        Ok(h)
    }

    fn analytic_derivative(&self, k: KPoint, dir: Direction) -> Option<Result<CMat>> {
        let mut h = CMat::zeros(self.dim, self.dim);
        for (nx, ny, m) in &self.terms {
            let n = match dir {
                Direction::X => *nx,
                Direction::Y => *ny,
            } as f64;
            let phase = Complex64::from_polar(1.0, *nx as f64 * k.kx + *ny as f64 * k.ky);
            h += m * (I * n * phase);
        }
        Some(Ok(h))
    }
}

/// Matrix entry given as separate real and imaginary row-major tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixTerm {
    #[serde(default)]
    pub nx: i32,
    #[serde(default)]
    pub ny: i32,
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

/// Serializable description of a model, as read from a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    RiceMele(RmParams),
    ThreeBand(ThreeBandParams),
    Pseudospin {
        #[serde(default)]
        d0: Vec<Harmonic>,
        #[serde(default)]
        dx: Vec<Harmonic>,
        #[serde(default)]
        dy: Vec<Harmonic>,
        #[serde(default)]
        dz: Vec<Harmonic>,
    },
    Matrix {
        dim: usize,
        terms: Vec<MatrixTerm>,
    },
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::RiceMele(RmParams::default())
    }
}

struct WithDerivative<M> {
    inner: M,
    kind: DerivativeKind,
}

impl<M: BlochModel> BlochModel for WithDerivative<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn hamiltonian(&self, k: KPoint) -> Result<CMat> {
        self.inner.hamiltonian(k)
    }
    fn analytic_derivative(&self, k: KPoint, dir: Direction) -> Option<Result<CMat>> {
        self.inner.analytic_derivative(k, dir)
    }
    fn derivative_kind(&self) -> DerivativeKind {
        self.kind
    }
}

fn matrix_from_tables(dim: usize, term: &MatrixTerm) -> Result<CMat> {
    let shape_ok = |t: &Vec<Vec<f64>>| t.len() == dim && t.iter().all(|r| r.len() == dim);
    if !shape_ok(&term.re) || term.im.as_ref().is_some_and(|t| !shape_ok(t)) {
        return Err(Error::InvalidParams(format!("matrix term must be {dim}x{dim}")));
    }
    Ok(CMat::from_fn(dim, dim, |i, j| {
        let im = term.im.as_ref().map_or(0.0, |t| t[i][j]);
        Complex64::new(term.re[i][j], im)
    }))
}

impl ModelSpec {
    pub fn build(&self, kind: DerivativeKind) -> Result<Box<dyn BlochModel>> {
        if let DerivativeKind::CentralDifference { step } = kind {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::InvalidParams("finite-difference step must be positive".into()));
            }
        }
        Ok(match self {
            ModelSpec::RiceMele(p) => Box::new(RiceMele::new(*p)?.with_derivative(kind)),
            ModelSpec::ThreeBand(p) => {
                let all = [p.t, p.g, p.gamma];
                if all.iter().any(|v| !v.is_finite()) || p.gamma < 0.0 {
                    return Err(Error::InvalidParams("invalid three-band parameters".into()));
                }
                Box::new(WithDerivative { inner: ThreeBand { params: *p }, kind })
            }
            ModelSpec::Pseudospin { d0, dx, dy, dz } => {
                let all = d0.iter().chain(dx).chain(dy).chain(dz);
                if all.clone().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
                    return Err(Error::InvalidParams("non-finite harmonic".into()));
                }
                let inner = FourierModel::pseudospin([d0, dx, dy, dz])?;
                Box::new(WithDerivative { inner, kind })
            }
            ModelSpec::Matrix { dim, terms } => {
                if *dim < 2 || *dim > 64 {
                    return Err(Error::InvalidParams("matrix dimension must be in 2..=64".into()));
                }
                let mats = terms
                    .iter()
                    .map(|t| matrix_from_tables(*dim, t).map(|m| (t.nx, t.ny, m)))
                    .collect::<Result<Vec<_>>>()?;
                Box::new(WithDerivative { inner: FourierModel::new(*dim, mats)?, kind })
            }
        })
    }
}
