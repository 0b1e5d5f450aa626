//! Extreme-eigenvalue estimation by block power iteration.
//!
//! |lambda|max comes from power iteration on the operator, |lambda|min from
//! the same iteration on its inverse action through a dense LU
//! factorization. A block of two vectors with a 2x2 Ritz projection keeps
//! the stagnation criterion meaningful when the dominant eigenvalue is a
//! complex pair. Iterations stop when the estimate changes by less than
//! the relative tolerance between subsequent iterations.

use crate::dense::DenseLu;
use crate::sparse::SparseMatrix;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// kappa_2, reported for symmetric operators.
    ConditionNumber,
    /// rho = |lambda|max / |lambda|min for nonsymmetric operators.
    EigenvalueRatio,
}

#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub metric: f64,
    pub kind: MetricKind,
    pub iterations_max: usize,
    pub iterations_min: usize,
    pub tolerance: f64,
}

/// Largest modulus among the eigenvalues of a 2x2 block.
fn block_eig_modulus(b: [[f64; 2]; 2]) -> f64 {
    let tr = b[0][0] + b[1][1];
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        (0.5 * tr + sq).abs().max((0.5 * tr - sq).abs())
    } else {
        // complex pair: |lambda|^2 = det
        det.abs().sqrt()
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Block power iteration on a black-box operator; returns the dominant
/// |lambda| estimate and the iteration count, or None when the operator
/// action produced non-finite values.
fn dominant_modulus(
    apply: &mut dyn FnMut(&[f64], &mut [f64]) -> bool,
    n: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Option<(f64, usize)> {
    let block = 2.min(n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut q, &mut rng);
    let mut z: Vec<Vec<f64>> = vec![vec![0.0; n]; block];
    let mut prev = f64::NAN;
    for k in 1..=max_iter {
        for (qi, zi) in q.iter().zip(z.iter_mut()) {
            if !apply(qi, zi) {
                return None;
            }
        }
        // Ritz projection B = Q^T Z
        let est = if block == 2 {
            let b = [
                [dot(&q[0], &z[0]), dot(&q[0], &z[1])],
                [dot(&q[1], &z[0]), dot(&q[1], &z[1])],
            ];
            block_eig_modulus(b)
        } else {
            dot(&q[0], &z[0]).abs()
        };
        if !est.is_finite() {
            return None;
        }
        if k >= 2 && (est - prev).abs() <= tol * est.abs().max(f64::MIN_POSITIVE) {
            return Some((est, k));
        }
        prev = est;
        std::mem::swap(&mut q, &mut z);
        orthonormalize(&mut q, &mut rng);
    }
    Some((prev, max_iter))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn orthonormalize(q: &mut [Vec<f64>], rng: &mut rand_chacha::ChaCha8Rng) {
    let n = q[0].len();
    for i in 0..q.len() {
        for j in 0..i {
            let (head, tail) = q.split_at_mut(i);
            let p = dot(&head[j], &tail[0]);
            for t in 0..n {
                q[i][t] -= p * q[j][t];
            }
        }
        if normalize(&mut q[i]) < 1e-14 {
            for t in 0..n {
                q[i][t] = rng.gen_range(-1.0..1.0);
            }
            for j in 0..i {
                let p = dot(&q[j], &q[i]);
                for t in 0..n {
                    q[i][t] -= p * q[j][t];
                }
            }
            normalize(&mut q[i]);
        }
    }
}

/// Estimates |lambda|max / |lambda|min of a square operator. For the
/// preconditioned case pass the assembled product S*A. A singular operator
/// (inverse action fails) reports an infinite metric.
pub fn power_extremes(m: &SparseMatrix, symmetric: bool, tol: f64, max_iter: usize) -> SpectralReport {
    assert_eq!(m.n_rows(), m.n_cols());
    let n = m.n_rows();
    let kind = if symmetric {
        MetricKind::ConditionNumber
    } else {
        MetricKind::EigenvalueRatio
    };
    let mut forward = |x: &[f64], y: &mut [f64]| {
        m.matvec_into(x, y);
        y.iter().all(|v| v.is_finite())
    };
    let (lambda_max, it_max) = match dominant_modulus(&mut forward, n, tol, max_iter, 0x5eed_0001) {
        Some(v) => v,
        None => {
            return SpectralReport {
                lambda_max: f64::INFINITY,
                lambda_min: 0.0,
                metric: f64::INFINITY,
                kind,
                iterations_max: 0,
                iterations_min: 0,
                tolerance: tol,
            }
        }
    };
    let lu = DenseLu::of_sparse(m);
    let mut buffer = vec![0.0; n];
    let mut inverse = |x: &[f64], y: &mut [f64]| {
        buffer.copy_from_slice(x);
        let ok = lu.solve_in_place(&mut buffer);
        y.copy_from_slice(&buffer);
        ok
    };
    let inv = dominant_modulus(&mut inverse, n, tol, max_iter, 0x5eed_0002);
    let (lambda_min, it_min) = match inv {
        Some((inv_max, iters)) if inv_max.is_finite() && inv_max > 0.0 => (1.0 / inv_max, iters),
        _ => (0.0, 0),
    };
    let metric = if lambda_min > 0.0 {
        (lambda_max / lambda_min).max(1.0)
    } else {
        f64::INFINITY
    };
    SpectralReport {
        lambda_max,
        lambda_min,
        metric,
        kind,
        iterations_max: it_max,
        iterations_min: it_min,
        tolerance: tol,
    }
}
