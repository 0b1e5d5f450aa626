//! Minimal CSR sparse matrices: triplet assembly, products, block
//! extraction. Deterministic by construction — triplets are sorted and
//! merged in index order regardless of insertion order.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Triplet accumulator; duplicate entries are summed on `build`.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl CooBuilder {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        CooBuilder {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        if value != 0.0 {
            self.entries.push((row as u32, col as u32, value));
        }
    }

    /// Adds `factor * m` with its (0,0) entry placed at (row_offset, col_offset).
    pub fn push_matrix(&mut self, row_offset: usize, col_offset: usize, factor: f64, m: &SparseMatrix) {
        for row in 0..m.n_rows {
            for (col, val) in m.row(row) {
                self.push(row_offset + row, col_offset + col, factor * val);
            }
        }
    }

    pub fn build(mut self) -> SparseMatrix {
        self.entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.n_rows + 1];
        let mut col_idx: Vec<u32> = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut it = self.entries.iter().peekable();
        while let Some(&(i, j, v)) = it.next() {
            let mut acc = v;
            while let Some(&&(i2, j2, v2)) = it.peek() {
                if i2 == i && j2 == j {
                    acc += v2;
                    it.next();
                } else {
                    break;
                }
            }
            if acc != 0.0 {
                col_idx.push(j);
                values.push(acc);
                row_ptr[i as usize + 1] += 1;
            }
        }
        for r in 0..self.n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Compressed-sparse-row matrix over f64.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.build()
    }

    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut b = CooBuilder::new(n_rows, n_cols);
        for &(i, j, v) in triplets {
            b.push(i, j, v);
        }
        b.build()
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut b = CooBuilder::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                b.push(i, j, m[(i, j)]);
            }
        }
        b.build()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates (col, value) over one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }

    /// Iterates all stored entries as (row, col, value) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&(c as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = CooBuilder::new(self.n_cols, self.n_rows);
        for (r, c, v) in self.iter() {
            b.push(c, r, v);
        }
        b.build()
    }

    /// Sparse-sparse product via a dense row accumulator.
    pub fn matmul(&self, rhs: &SparseMatrix) -> Result<SparseMatrix, SparseError> {
        if self.n_cols != rhs.n_rows {
            return Err(SparseError::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let mut b = CooBuilder::new(self.n_rows, rhs.n_cols);
        let mut acc = vec![0.0f64; rhs.n_cols];
        let mut touched: Vec<u32> = Vec::new();
        for r in 0..self.n_rows {
            touched.clear();
            for (k, v) in self.row(r) {
                if v == 0.0 {
                    continue;
                }
                let lo = rhs.row_ptr[k];
                let hi = rhs.row_ptr[k + 1];
                for t in lo..hi {
                    let c = rhs.col_idx[t] as usize;
                    if acc[c] == 0.0 {
                        touched.push(c as u32);
                    }
                    acc[c] += v * rhs.values[t];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                let v = acc[c as usize];
                if v != 0.0 {
                    b.push(r, c as usize, v);
                }
                acc[c as usize] = 0.0;
            }
        }
        Ok(b.build())
    }

    /// Dense copy of the sub-block with the given (sorted, unique) indices.
    pub fn extract_block(&self, rows: &[usize], cols: &[usize]) -> nalgebra::DMatrix<f64> {
        let mut pos = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            pos[c] = k;
        }
        let mut out = nalgebra::DMatrix::zeros(rows.len(), cols.len());
        for (ri, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                let p = pos[c];
                if p != usize::MAX {
                    out[(ri, p)] = v;
                }
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    /// Sparse copy of a contiguous sub-block.
    pub fn extract_sparse(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> SparseMatrix {
        let mut b = CooBuilder::new(rows.len(), cols.len());
        for r in rows.clone() {
            for (c, v) in self.row(r) {
                if cols.contains(&c) {
                    b.push(r - rows.start, c - cols.start, v);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut out = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            out[(r, c)] += v;
        }
        out
    }

    pub fn to_faer(&self) -> faer::Mat<f64> {
        let mut out = faer::Mat::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            out[(r, c)] += v;
        }
        out
    }

    /// Symmetric diagonal congruence d_i * a_ij * d_j.
    pub fn scale_symmetric(&self, d: &[f64]) -> SparseMatrix {
        assert_eq!(d.len(), self.n_rows);
        assert_eq!(d.len(), self.n_cols);
        let mut out = self.clone();
        for r in 0..out.n_rows {
            let lo = out.row_ptr[r];
            let hi = out.row_ptr[r + 1];
            for k in lo..hi {
                out.values[k] *= d[r] * d[out.col_idx[k] as usize];
            }
        }
        out
    }

    /// Largest |a_ij|.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicate_triplets_are_summed() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, -1.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn exact_cancellation_drops_entry() {
        let m = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0), (0, 0, -1.0)]);
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn block_extraction() {
        let m = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (2, 0, 4.0), (2, 2, 5.0)],
        );
        let b = m.extract_block(&[0, 2], &[0, 2]);
        assert_eq!(b[(0, 0)], 1.0);
        assert_eq!(b[(0, 1)], 2.0);
        assert_eq!(b[(1, 0)], 4.0);
        assert_eq!(b[(1, 1)], 5.0);
    }

    proptest! {
        #[test]
        fn matmul_matches_dense(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n, m, k) = (rng.gen_range(1..8), rng.gen_range(1..8), rng.gen_range(1..8));
            let mut ab = CooBuilder::new(n, m);
            let mut bb = CooBuilder::new(m, k);
            for _ in 0..rng.gen_range(0..20) {
                ab.push(rng.gen_range(0..n), rng.gen_range(0..m), rng.gen_range(-1.0..1.0));
            }
            for _ in 0..rng.gen_range(0..20) {
                bb.push(rng.gen_range(0..m), rng.gen_range(0..k), rng.gen_range(-1.0..1.0));
            }
            let a = ab.build();
            let b = bb.build();
            let c = a.matmul(&b).unwrap();
            let dense = a.to_dense() * b.to_dense();
            let diff = (c.to_dense() - dense).abs().max();
            prop_assert!(diff < 1e-12);
        }

        #[test]
        fn transpose_round_trip(seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n, m) = (rng.gen_range(1..10), rng.gen_range(1..10));
            let mut b = CooBuilder::new(n, m);
            for _ in 0..rng.gen_range(0..30) {
                b.push(rng.gen_range(0..n), rng.gen_range(0..m), rng.gen_range(-1.0..1.0));
            }
            let a = b.build();
            prop_assert_eq!(a.transpose().transpose(), a);
        }
    }
}
