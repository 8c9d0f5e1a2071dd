use thiserror::Error;

/// Numerical and domain failures raised by the library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate point at k=({kx:.6}, {ky:.6}): |d.d| = {value:.3e}")]
    DegeneratePoint { kx: f64, ky: f64, value: f64 },
    #[error("exceptional point: band gap {gap:.3e} below tolerance")]
    ExceptionalPoint { gap: f64 },
    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    NonConvergence { iterations: usize },
    #[error("overlap matrix ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("curvature has imaginary part {imag:.3e}")]
    NonRealCurvature { imag: f64 },
    #[error("gauge lock failed: stencil overlap {overlap:.3e} below 0.5")]
    GaugeLockFailure { overlap: f64 },
    #[error("link variable collapsed (|U| = {modulus:.3e}) at k=({kx:.6}, {ky:.6})")]
    LinkCollapse { kx: f64, ky: f64, modulus: f64 },
    #[error("plaquette phase sum {value:.6} is not an integer")]
    NonIntegerResidue { value: f64 },
    #[error("bound violated at {count} points, worst margin {worst:.3e}")]
    BoundViolation { count: usize, worst: f64 },
    #[error("branch violation: arg = {arg:.6} outside [-pi, 0]")]
    BranchViolation { arg: f64 },
    #[error("pole on the real axis at omega = {omega:.6}")]
    PoleOnAxis { omega: f64 },
    #[error("input matrix is not Hermitian (residue {residue:.3e})")]
    NonHermitianInput { residue: f64 },
    #[error("target is not Hermitian (residue {residue:.3e})")]
    NonHermitianTarget { residue: f64 },
    #[error("commutator norm {norm:.3e} exceeds tolerance")]
    CommutatorViolation { norm: f64 },
    #[error("integrand not integrable: decay rate {rate:.3e} is not positive")]
    NonIntegrable { rate: f64 },
    #[error("{count} exceptional points on the mesh, first at k=({kx:.6}, {ky:.6})")]
    ExceptionalMesh { count: usize, kx: f64, ky: f64, points: Vec<(f64, f64)> },
}

impl Error {
    /// True for failures caused by the spectrum itself (gap closings, conditioning).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidParams(_) | Error::BoundViolation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
