//! Assembly of the model problems on the immersed geometry.
//!
//! All bilinear forms integrate over the trimmed quadrature produced by the
//! geometry module and impose Dirichlet conditions weakly through Nitsche
//! terms with the element-wise stabilization constants from
//! [`nitsche_constant`]. Assembly accumulates triplets per element and
//! merges them in index order, so the result is deterministic.

mod kernels;
mod mixed;
mod nitsche;
mod scalar;

pub use kernels::{normal_sym_grad, sym_grad_contraction};
pub use mixed::{
    assemble_oseen, assemble_scalar_gram, assemble_stokes, assemble_velocity_gram, assemble_velocity_mass,
    convection_volume_matrix, outflow_boundary_matrix, ConvectiveField, MixedBlocks, VectorBoundaryData,
};
pub use nitsche::{nitsche_constant, GradientKind};
pub use scalar::{
    assemble_convection_diffusion_supg, assemble_convection_diffusion_supg_with_tau, assemble_poisson,
    NitscheVariant, PoissonOptions, ScalarBoundaryData,
};

use crate::sparse::SparseMatrix;
use crate::spline::FieldLayout;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("element {element} has no quadrature")]
    MissingQuadrature { element: usize },
    #[error("stabilization constant failed on element {element}: {reason}")]
    Stabilization { element: usize, reason: String },
    #[error("convective velocity has zero magnitude; stabilization parameter undefined")]
    ZeroConvectiveVelocity,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Spline(#[from] crate::spline::SplineError),
}

/// Problem metadata carried along with an assembled system.
#[derive(Debug, Clone, Default)]
pub struct SystemMeta {
    pub problem: String,
    pub theta: f64,
    pub eta: f64,
    pub params: Vec<(String, f64)>,
}

/// A linear system A x = b together with its field layout (for mixed
/// problems), sub-blocks, and the per-element Nitsche constants used.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub layout: Option<FieldLayout>,
    pub blocks: Option<MixedBlocks>,
    pub betas: BTreeMap<usize, f64>,
    pub meta: SystemMeta,
}

impl AssembledSystem {
    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Every active function must receive at least one stored entry.
    pub fn has_empty_row_or_col(&self) -> bool {
        let n = self.matrix.n_rows();
        let mut row_hit = vec![false; n];
        let mut col_hit = vec![false; n];
        for (r, c, _) in self.matrix.iter() {
            row_hit[r] = true;
            col_hit[c] = true;
        }
        !(row_hit.iter().all(|&b| b) && col_hit.iter().all(|&b| b))
    }
}

/// Time discretization parameters of the one-step theta scheme.
#[derive(Debug, Clone, Copy)]
pub struct ThetaSchemeConfig {
    pub theta: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Default for ThetaSchemeConfig {
    fn default() -> Self {
        ThetaSchemeConfig { theta: 0.5, dt: 1e-2, steps: 1 }
    }
}

impl ThetaSchemeConfig {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(AssemblyError::DimensionMismatch("theta must lie in [0, 1]".into()));
        }
        if !(self.dt > 0.0) {
            return Err(AssemblyError::DimensionMismatch("time step must be positive".into()));
        }
        Ok(())
    }
}

/// One-step theta-scheme block system
///
/// ```text
/// K = [ M + theta dt A_vu   dt A_vp ]      rhs = [ (M - (1-theta) dt A_vu) x_u + dt b_v ]
///     [ dt A_qu             0       ]            [ dt b_q                               ]
/// ```
pub fn theta_step(
    mass: &SparseMatrix,
    a_vu: &SparseMatrix,
    a_vp: &SparseMatrix,
    a_qu: &SparseMatrix,
    b_v: &[f64],
    b_q: &[f64],
    x_u_prev: &[f64],
    cfg: &ThetaSchemeConfig,
) -> Result<(SparseMatrix, Vec<f64>), AssemblyError> {
    cfg.validate()?;
    let n_u = mass.n_rows();
    let n_p = a_vp.n_cols();
    if a_vu.n_rows() != n_u
        || a_vu.n_cols() != n_u
        || mass.n_cols() != n_u
        || a_vp.n_rows() != n_u
        || a_qu.n_rows() != n_p
        || a_qu.n_cols() != n_u
        || b_v.len() != n_u
        || b_q.len() != n_p
        || x_u_prev.len() != n_u
    {
        return Err(AssemblyError::DimensionMismatch(
            "theta_step block dimensions are inconsistent".into(),
        ));
    }
    let dt = cfg.dt;
    let mut k = crate::sparse::CooBuilder::new(n_u + n_p, n_u + n_p);
    k.push_matrix(0, 0, 1.0, mass);
    k.push_matrix(0, 0, cfg.theta * dt, a_vu);
    k.push_matrix(0, n_u, dt, a_vp);
    k.push_matrix(n_u, 0, dt, a_qu);
    let k = k.build();

    let m_x = mass.matvec(x_u_prev);
    let a_x = a_vu.matvec(x_u_prev);
    let mut rhs = vec![0.0; n_u + n_p];
    for i in 0..n_u {
        rhs[i] = m_x[i] - (1.0 - cfg.theta) * dt * a_x[i] + dt * b_v[i];
    }
    for j in 0..n_p {
        rhs[n_u + j] = dt * b_q[j];
    }
    Ok((k, rhs))
}
