//! Picard (Oseen) iteration for the steady Navier-Stokes equations and the
//! theta-scheme transient driver built on it.

use super::krylov::{gmres, KrylovConfig};
use super::spectral::{power_extremes, SpectralReport};
use super::SolverError;
use crate::cbas::{CbasError, MixedPreconditioner};
use crate::forms::{theta_step, AssembledSystem, AssemblyError, ThetaSchemeConfig};
use crate::sparse::{CooBuilder, SparseMatrix};
use crate::spline::FieldLayout;

#[derive(Debug, Clone)]
pub struct PicardConfig {
    /// Tolerance on the combined relative H1/L2 increment.
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive increment growths before the iteration is declared
    /// divergent.
    pub divergence_streak: usize,
    pub krylov: KrylovConfig,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            tol: 1e-6,
            max_iter: 50,
            divergence_streak: 5,
            krylov: KrylovConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PicardReport {
    pub iterations: usize,
    pub converged: bool,
    /// Relative increment per iteration.
    pub increments: Vec<f64>,
}

fn gram_quad(g: &SparseMatrix, x: &[f64]) -> f64 {
    g.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Combined relative increment
/// sqrt((|du|_G^2 + |dp|_M^2) / (|u+u'|_G^2 + |p+p'|_M^2)).
fn increment_ratio(
    velocity_gram: &SparseMatrix,
    pressure_gram: &SparseMatrix,
    u_new: &[f64],
    p_new: &[f64],
    u_old: &[f64],
    p_old: &[f64],
) -> f64 {
    let du: Vec<f64> = u_new.iter().zip(u_old).map(|(a, b)| a - b).collect();
    let dp: Vec<f64> = p_new.iter().zip(p_old).map(|(a, b)| a - b).collect();
    let su: Vec<f64> = u_new.iter().zip(u_old).map(|(a, b)| a + b).collect();
    let sp: Vec<f64> = p_new.iter().zip(p_old).map(|(a, b)| a + b).collect();
    let num = gram_quad(velocity_gram, &du) + gram_quad(pressure_gram, &dp);
    let den = gram_quad(velocity_gram, &su) + gram_quad(pressure_gram, &sp);
    if den <= f64::MIN_POSITIVE {
        if num <= f64::MIN_POSITIVE {
            0.0
        } else {
            1.0
        }
    } else {
        (num / den).sqrt()
    }
}

/// Fixed-point iteration that solves the Oseen problem with the previous
/// velocity iterate as convective field. `assemble` maps velocity
/// coefficients to the Oseen system, `precondition` builds the mixed
/// preconditioner for it, and the initial iterate is the Stokes solution.
#[allow(clippy::too_many_arguments)]
pub fn picard(
    assemble: &dyn Fn(&[f64]) -> Result<AssembledSystem, AssemblyError>,
    precondition: &dyn Fn(&AssembledSystem) -> Result<MixedPreconditioner, CbasError>,
    velocity_gram: &SparseMatrix,
    pressure_gram: &SparseMatrix,
    initial_u: &[f64],
    initial_p: &[f64],
    layout: &FieldLayout,
    cfg: &PicardConfig,
) -> Result<(Vec<f64>, Vec<f64>, PicardReport), SolverError> {
    let n_v = layout.velocity_total();
    let mut u = initial_u.to_vec();
    let mut p = initial_p.to_vec();
    let mut increments = Vec::new();
    let mut growth_streak = 0usize;
    for iteration in 1..=cfg.max_iter {
        let sys = assemble(&u)?;
        let s = precondition(&sys)?;
        let s_mat = s.as_sparse();
        let (x, lin) = gmres(&sys.matrix, &sys.rhs, Some(&s_mat), &cfg.krylov)?;
        if !lin.converged {
            return Err(SolverError::LinearSolveFailed {
                iterations: lin.iterations,
                residual: lin.residual_history.last().copied().unwrap_or(f64::NAN),
            });
        }
        let (u_new, p_new) = (x[..n_v].to_vec(), x[n_v..].to_vec());
        let ratio = increment_ratio(velocity_gram, pressure_gram, &u_new, &p_new, &u, &p);
        if let Some(&last) = increments.last() {
            growth_streak = if ratio > last { growth_streak + 1 } else { 0 };
        }
        increments.push(ratio);
        u = u_new;
        p = p_new;
        if ratio <= cfg.tol {
            return Ok((
                u,
                p,
                PicardReport { iterations: iteration, converged: true, increments },
            ));
        }
        if growth_streak >= cfg.divergence_streak {
            break;
        }
    }
    let iterations = increments.len();
    Ok((
        u,
        p,
        PicardReport { iterations, converged: false, increments },
    ))
}

/// One record of the transient drive: the converged step solution and the
/// spectral estimates of the theta-scheme operator at the final Picard
/// iteration.
#[derive(Debug, Clone)]
pub struct TransientStep {
    pub step: usize,
    pub time: f64,
    pub picard_iterations: usize,
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub preconditioned: SpectralReport,
    pub raw: Option<SpectralReport>,
}

/// Integrates the nonlinear system with the one-step theta scheme. Each
/// step runs Picard iterations on the theta-scheme operator K whose
/// convective field is theta u^{n+1} + (1-theta) u^n, starting from the
/// previous step's velocity; the preconditioner is rebuilt from the K
/// blocks every iteration.
#[allow(clippy::too_many_arguments)]
pub fn transient_drive(
    assemble_oseen: &dyn Fn(&[f64]) -> Result<AssembledSystem, AssemblyError>,
    mass: &SparseMatrix,
    precondition_k: &dyn Fn(
        &SparseMatrix,
        &SparseMatrix,
        &SparseMatrix,
    ) -> Result<MixedPreconditioner, CbasError>,
    velocity_gram: &SparseMatrix,
    pressure_gram: &SparseMatrix,
    initial_u: &[f64],
    initial_p: &[f64],
    layout: &FieldLayout,
    scheme: &ThetaSchemeConfig,
    picard_cfg: &PicardConfig,
    spectral_tol: f64,
    measure_raw: bool,
) -> Result<Vec<TransientStep>, SolverError> {
    let n_v = layout.velocity_total();
    let n_u_rows = mass.n_rows();
    if n_u_rows != n_v {
        return Err(SolverError::DimensionMismatch("mass matrix against layout".into()));
    }
    let mut u_n = initial_u.to_vec();
    let mut p_n = initial_p.to_vec();
    let mut out = Vec::with_capacity(scheme.steps);

    for step in 1..=scheme.steps {
        let mut u_next = u_n.clone();
        let mut p_next = p_n.clone();
        let mut converged = false;
        let mut iterations = 0usize;
        let mut last_k: Option<(SparseMatrix, SparseMatrix)> = None;
        let mut prev_ratio = f64::INFINITY;
        let mut growth_streak = 0usize;

        for m in 1..=picard_cfg.max_iter {
            let w: Vec<f64> = u_next
                .iter()
                .zip(&u_n)
                .map(|(a, b)| scheme.theta * a + (1.0 - scheme.theta) * b)
                .collect();
            let sys = assemble_oseen(&w)?;
            let blocks = sys.blocks.as_ref().expect("transient drive needs a mixed system");
            let (b_v, b_q) = sys.rhs.split_at(n_v);
            let (k, rhs) = theta_step(mass, &blocks.a_vu, &blocks.a_vp, &blocks.a_qu, b_v, b_q, &u_n, scheme)?;

            // K sub-blocks for the preconditioner
            let mut k_vu = CooBuilder::new(n_v, n_v);
            k_vu.push_matrix(0, 0, 1.0, mass);
            k_vu.push_matrix(0, 0, scheme.theta * scheme.dt, &blocks.a_vu);
            let k_vu = k_vu.build();
            let mut k_vp = CooBuilder::new(n_v, layout.n_p);
            k_vp.push_matrix(0, 0, scheme.dt, &blocks.a_vp);
            let k_vp = k_vp.build();
            let mut k_qu = CooBuilder::new(layout.n_p, n_v);
            k_qu.push_matrix(0, 0, scheme.dt, &blocks.a_qu);
            let k_qu = k_qu.build();

            let s = precondition_k(&k_vu, &k_vp, &k_qu)?;
            let s_mat = s.as_sparse();
            let (x, lin) = gmres(&k, &rhs, Some(&s_mat), &picard_cfg.krylov)?;
            if !lin.converged {
                return Err(SolverError::LinearSolveFailed {
                    iterations: lin.iterations,
                    residual: lin.residual_history.last().copied().unwrap_or(f64::NAN),
                });
            }
            let (u_new, p_new) = (x[..n_v].to_vec(), x[n_v..].to_vec());
            let ratio = increment_ratio(velocity_gram, pressure_gram, &u_new, &p_new, &u_next, &p_next);
            growth_streak = if ratio > prev_ratio { growth_streak + 1 } else { 0 };
            prev_ratio = ratio;
            u_next = u_new;
            p_next = p_new;
            iterations = m;
            last_k = Some((s_mat, k));
            if ratio <= picard_cfg.tol {
                converged = true;
                break;
            }
            if growth_streak >= picard_cfg.divergence_streak {
                break;
            }
        }

        if !converged {
            return Err(SolverError::PicardFailed { step });
        }
        let (s_mat, k) = last_k.expect("at least one Picard iteration ran");
        let product = s_mat
            .matmul(&k)
            .map_err(|e| SolverError::DimensionMismatch(e.to_string()))?;
        let preconditioned = power_extremes(&product, false, spectral_tol, 100_000);
        let raw = measure_raw.then(|| power_extremes(&k, false, spectral_tol, 100_000));
        out.push(TransientStep {
            step,
            time: step as f64 * scheme.dt,
            picard_iterations: iterations,
            velocity: u_next.clone(),
            pressure: p_next.clone(),
            preconditioned,
            raw,
        });
        u_n = u_next;
        p_n = p_next;
    }
    Ok(out)
}
