//! Conjugate gradients and GMRES with optional left preconditioning.
//!
//! The reported residual history is the relative preconditioned residual
//! ||S (b - A x)|| / ||S b|| (plain relative residual without S), which is
//! what the convergence comparisons record.

use super::SolverError;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct KrylovConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Restart length for GMRES; None keeps the full Krylov basis.
    pub restart: Option<usize>,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            tol: 1e-10,
            max_iter: 5000,
            restart: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn apply_opt(s: Option<&SparseMatrix>, x: &[f64]) -> Vec<f64> {
    match s {
        Some(m) => m.matvec(x),
        None => x.to_vec(),
    }
}

/// Preconditioned conjugate gradients. Requires A (and S, when given) to be
/// symmetric positive definite; non-positive curvature aborts with a
/// breakdown error.
pub fn cg(
    a: &SparseMatrix,
    b: &[f64],
    s: Option<&SparseMatrix>,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let n = a.n_rows();
    if b.len() != n || a.n_cols() != n {
        return Err(SolverError::DimensionMismatch("cg operands".into()));
    }
    let sb_norm = norm(&apply_opt(s, b));
    let mut x = vec![0.0; n];
    if sb_norm == 0.0 {
        return Ok((
            x,
            SolveReport { iterations: 0, residual_history: vec![0.0], converged: true },
        ));
    }
    let mut r = b.to_vec();
    let mut z = apply_opt(s, &r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![norm(&z) / sb_norm];
    let mut q = vec![0.0; n];
    for k in 1..=cfg.max_iter {
        a.matvec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(SolverError::CgBreakdown);
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        z = apply_opt(s, &r);
        let res = norm(&z) / sb_norm;
        history.push(res);
        if res <= cfg.tol {
            return Ok((x, SolveReport { iterations: k, residual_history: history, converged: true }));
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        if !beta.is_finite() {
            return Err(SolverError::CgBreakdown);
        }
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((
        x,
        SolveReport { iterations: cfg.max_iter, residual_history: history, converged: false },
    ))
}

/// Left-preconditioned GMRES with modified Gram-Schmidt and Givens
/// rotations; the residual history is non-increasing by the minimal
/// residual property. Without a restart length the Krylov basis grows to
/// at most the system dimension.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    s: Option<&SparseMatrix>,
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveReport), SolverError> {
    let n = a.n_rows();
    if b.len() != n || a.n_cols() != n {
        return Err(SolverError::DimensionMismatch("gmres operands".into()));
    }
    let sb = apply_opt(s, b);
    let sb_norm = norm(&sb);
    let mut x = vec![0.0; n];
    if sb_norm == 0.0 {
        return Ok((
            x,
            SolveReport { iterations: 0, residual_history: vec![0.0], converged: true },
        ));
    }
    let mut history = Vec::new();
    let mut total_iters = 0usize;
    let cycle_len = cfg.restart.unwrap_or(cfg.max_iter).min(n).max(1);
    let mut converged = false;

    'outer: loop {
        // r0 = S (b - A x)
        let ax = a.matvec(&x);
        let mut r0: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        r0 = apply_opt(s, &r0);
        let beta = norm(&r0);
        if history.is_empty() {
            history.push(beta / sb_norm);
        }
        if beta / sb_norm <= cfg.tol {
            converged = true;
            break;
        }
        let m = cycle_len.min(cfg.max_iter - total_iters);
        if m == 0 {
            break;
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r0.iter().map(|t| t / beta).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            total_iters += 1;
            // w = S A v_k
            let w0 = a.matvec(&v[k]);
            let mut w = apply_opt(s, &w0);
            for j in 0..=k {
                let hj = dot(&w, &v[j]);
                h[j][k] = hj;
                for i in 0..n {
                    w[i] -= hj * v[j][i];
                }
            }
            let hnext = norm(&w);
            h[k + 1][k] = hnext;
            // apply previous Givens rotations to column k
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let denom = (h[k][k] * h[k][k] + hnext * hnext).sqrt();
            if denom == 0.0 {
                k_used = k;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = hnext / denom;
            h[k][k] = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let res = g[k + 1].abs() / sb_norm;
            history.push(res);
            let happy = hnext <= 1e-14 * denom.max(1.0);
            if res <= cfg.tol || happy || total_iters >= cfg.max_iter {
                if res <= cfg.tol || happy {
                    converged = true;
                }
                break;
            }
            v.push(w.iter().map(|t| t / hnext).collect());
        }

        // back substitution for the cycle update
        if k_used > 0 {
            let mut y = vec![0.0f64; k_used];
            for i in (0..k_used).rev() {
                let mut sum = g[i];
                for j in i + 1..k_used {
                    sum -= h[i][j] * y[j];
                }
                y[i] = sum / h[i][i];
            }
            for (j, yj) in y.iter().enumerate() {
                for i in 0..n {
                    x[i] += yj * v[j][i];
                }
            }
        }
        if converged || total_iters >= cfg.max_iter {
            break 'outer;
        }
        if cfg.restart.is_none() && k_used < cycle_len {
            // full-basis run exhausted the space without reaching the
            // tolerance; no progress is possible
            break;
        }
    }

    Ok((
        x,
        SolveReport { iterations: total_iters, residual_history: history, converged },
    ))
}
