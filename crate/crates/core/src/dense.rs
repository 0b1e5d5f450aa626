//! Dense factorization used for inverse-power iterations and a few small
//! eigenvalue helpers shared by the preconditioner and the solvers.

use crate::sparse::SparseMatrix;
use faer::linalg::solvers::SpSolver;

/// LU with partial pivoting of a (possibly very ill-conditioned) operator.
pub struct DenseLu {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
}

impl DenseLu {
    pub fn of_sparse(m: &SparseMatrix) -> Self {
        assert_eq!(m.n_rows(), m.n_cols());
        let dense = m.to_faer();
        DenseLu {
            lu: dense.partial_piv_lu(),
            n: m.n_rows(),
        }
    }

    pub fn of_faer(m: &faer::Mat<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        DenseLu {
            lu: m.partial_piv_lu(),
            n: m.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves in place; returns false if the result is not finite
    /// (singular factorization).
    pub fn solve_in_place(&self, x: &mut [f64]) -> bool {
        assert_eq!(x.len(), self.n);
        let mut rhs = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| x[i]);
        self.lu.solve_in_place(rhs.as_mut());
        let mut finite = true;
        for i in 0..self.n {
            x[i] = rhs[(i, 0)];
            finite &= x[i].is_finite();
        }
        finite
    }
}

/// Moduli of the eigenvalues of a real matrix.
pub fn eigenvalue_moduli(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    fm.eigenvalues::<faer::complex_native::c64>()
        .into_iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .collect()
}

/// Symmetric whitening transform: columns T such that T^t G T = I on the
/// subspace of eigenvalues above `rel_tol * lambda_max`. Returns None when
/// the kept subspace is empty.
pub fn whiten_spd(g: &nalgebra::DMatrix<f64>, rel_tol: f64) -> Option<nalgebra::DMatrix<f64>> {
    let eig = nalgebra::SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > rel_tol * max)
        .collect();
    if keep.is_empty() {
        return None;
    }
    let n = g.nrows();
    let mut t = nalgebra::DMatrix::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[i].sqrt();
        for r in 0..n {
            t[(r, k)] = eig.eigenvectors[(r, i)] * scale;
        }
    }
    Some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn lu_solves_random_system() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let a = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
            + nalgebra::DMatrix::<f64>::identity(n, n) * 5.0;
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = &a * nalgebra::DVector::from_column_slice(&x_true);
        let lu = DenseLu::of_sparse(&SparseMatrix::from_dense(&a));
        let mut x = b.as_slice().to_vec();
        assert!(lu.solve_in_place(&mut x));
        for i in 0..n {
            assert_relative_eq!(x[i], x_true[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn whitening_reproduces_identity_gram() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let b = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let g = &b * b.transpose() + nalgebra::DMatrix::identity(n, n) * 0.1;
        let t = whiten_spd(&g, 1e-12).unwrap();
        let should_be_eye = t.transpose() * &g * &t;
        assert_relative_eq!(
            (should_be_eye - nalgebra::DMatrix::identity(n, n)).abs().max(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn eigen_moduli_of_rotation_block() {
        // [[0,-1],[1,0]] has eigenvalues +-i
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let mods = eigenvalue_moduli(&m);
        for v in mods {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }
    }
}
