//! Preconditioned Krylov solvers, extreme-eigenvalue estimation, and the
//! nonlinear/transient drivers built on top of them.

mod krylov;
mod picard;
mod spectral;

pub use krylov::{cg, gmres, KrylovConfig, SolveReport};
pub use picard::{picard, transient_drive, PicardConfig, PicardReport, TransientStep};
pub use spectral::{power_extremes, MetricKind, SpectralReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("conjugate gradient breakdown: non-positive curvature, the operator is not positive definite")]
    CgBreakdown,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear solve did not converge within {iterations} iterations (residual {residual:.3e})")]
    LinearSolveFailed { iterations: usize, residual: f64 },
    #[error("Picard iteration failed to converge at time step {step}")]
    PicardFailed { step: usize },
    #[error(transparent)]
    Assembly(#[from] crate::forms::AssemblyError),
    #[error(transparent)]
    Preconditioner(#[from] crate::cbas::CbasError),
}
