//! Immersed isogeometric finite elements in two dimensions, with a
//! connectivity-based additive-Schwarz (CbAS) preconditioner for the
//! severely ill-conditioned systems that trimmed elements produce.
//!
//! The crate is organized along the pipeline:
//!
//! * [`geometry`] — background grids, element classification against an
//!   implicitly described domain, and bisection tessellation of trimmed
//!   elements into volume and boundary quadrature rules.
//! * [`spline`] — tensor-product B-spline spaces of chosen degree and
//!   regularity, element connectivity, and restriction to the physical
//!   domain; Taylor-Hood velocity/pressure layouts.
//! * [`forms`] — assembly of the model problems (Poisson with symmetric and
//!   nonsymmetric Nitsche boundary terms, SUPG-stabilized
//!   convection-diffusion, Stokes, Oseen/Navier-Stokes) plus mass matrices
//!   and the one-step theta-scheme system.
//! * [`cbas`] — the additive-Schwarz preconditioner built from one block per
//!   trimmed element (per spatial direction for vector fields) with diagonal
//!   scaling elsewhere, and its Schur-complement extension to mixed systems.
//! * [`solvers`] — preconditioned CG and GMRES, extreme-eigenvalue
//!   estimation by (block) power iteration, the Picard loop for
//!   Navier-Stokes, and the transient theta-scheme driver.
//! * [`exchange`] — plain-text matrix-exchange and block-spec files for the
//!   standalone preconditioning workflow.

pub mod cbas;
pub mod dense;
pub mod exchange;
pub mod forms;
pub mod geometry;
pub mod quadrature;
pub mod solvers;
pub mod sparse;
pub mod spline;

pub use sparse::SparseMatrix;
