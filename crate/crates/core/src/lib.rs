//! Biorthogonal quantum geometry of non-Hermitian Bloch Hamiltonians.
//!
//! Right/left eigensystems, quantum geometric tensors, non-Hermitian Chern
//! numbers, the geometric bounds linking them, optical weights and the
//! Lindblad/Keldysh response machinery built on top.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod lindblad;
pub mod models;
pub mod numeric;
pub mod report;
pub mod response;
pub mod spectra;
pub mod topology;

pub use error::{Error, Result};
