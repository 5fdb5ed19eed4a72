//! Matrix containers used throughout the crate.
//!
//! Pooling matrices are binary and very sparse, so they are stored as the
//! list of row indices holding a one in each column. Real-valued sensing
//! matrices (the normalized design, or arbitrary test instances) use a
//! compressed sparse column layout.

use nalgebra::DMatrix;
use std::fmt;

/// A binary `rows x cols` matrix stored by column supports.
///
/// Each support is sorted and free of duplicates.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    supports: Vec<Vec<usize>>,
}

impl fmt::Debug for BinaryMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMatrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryMatrix {
    /// Builds a matrix from per-column supports. Supports are sorted and
    /// deduplicated; returns `None` if a row index is out of range.
    pub fn from_supports(rows: usize, supports: Vec<Vec<usize>>) -> Option<Self> {
        let mut supports = supports;
        for s in &mut supports {
            s.sort_unstable();
            s.dedup();
            if s.last().is_some_and(|&r| r >= rows) {
                return None;
            }
        }
        Some(Self { rows, cols: supports.len(), supports })
    }

    /// Builds a matrix from `(row, col)` positions of its ones.
    pub fn from_ones(rows: usize, cols: usize, ones: &[(usize, usize)]) -> Option<Self> {
        let mut supports = vec![Vec::new(); cols];
        for &(r, c) in ones {
            if c >= cols {
                return None;
            }
            supports[c].push(r);
        }
        Self::from_supports(rows, supports)
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: n, cols: n, supports: (0..n).map(|i| vec![i]).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sorted row indices of the ones in column `col`.
    pub fn support(&self, col: usize) -> &[usize] {
        &self.supports[col]
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn count_ones(&self) -> usize {
        self.supports.iter().map(Vec::len).sum()
    }

    pub fn column_weights(&self) -> Vec<usize> {
        self.supports.iter().map(Vec::len).collect()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        let mut w = vec![0; self.rows];
        for s in &self.supports {
            for &r in s {
                w[r] += 1;
            }
        }
        w
    }

    /// Positions of the ones, sorted lexicographically by `(row, col)`.
    pub fn ones(&self) -> Vec<(usize, usize)> {
        let mut ones: Vec<(usize, usize)> = self
            .supports
            .iter()
            .enumerate()
            .flat_map(|(c, s)| s.iter().map(move |&r| (r, c)))
            .collect();
        ones.sort_unstable();
        ones
    }

    /// Rows of the matrix as lists of column indices, each sorted.
    pub fn row_supports(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.rows];
        for (c, s) in self.supports.iter().enumerate() {
            for &r in s {
                rows[r].push(c);
            }
        }
        rows
    }

    /// Submatrix made of the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            rows: self.rows,
            cols: cols.len(),
            supports: cols.iter().map(|&c| self.supports[c].clone()).collect(),
        }
    }

    /// Number of rows shared by columns `a` and `b`.
    pub fn column_overlap(&self, a: usize, b: usize) -> usize {
        let (sa, sb) = (&self.supports[a], &self.supports[b]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < sa.len() && j < sb.len() {
            match sa[i].cmp(&sb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// The matrix with every one replaced by `scale`.
    pub fn scaled(&self, scale: f64) -> CscMatrix {
        let mut col_ptr = Vec::with_capacity(self.cols + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::with_capacity(self.count_ones());
        for s in &self.supports {
            row_idx.extend_from_slice(s);
            col_ptr.push(row_idx.len());
        }
        let values = vec![scale; row_idx.len()];
        CscMatrix { nrows: self.rows, ncols: self.cols, col_ptr, row_idx, values }
    }

    pub fn to_dense(&self, scale: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (c, s) in self.supports.iter().enumerate() {
            for &r in s {
                m[(r, c)] = scale;
            }
        }
        m
    }
}

/// Real matrix in compressed sparse column form.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Keeps the exact nonzeros of a dense matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for c in 0..ncols {
            for r in 0..nrows {
                let v = m[(r, c)];
                if v != 0.0 {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { nrows, ncols, col_ptr, row_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(row, value)` pairs of column `c`.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// `out = A x`
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        out.fill(0.0);
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                out[self.row_idx[k]] += self.values[k] * xc;
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_into(x, &mut out);
        out
    }

    /// `out = A^T u`
    pub fn mul_transpose_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        for (c, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[k] * u[self.row_idx[k]];
            }
            *o = acc;
        }
    }

    pub fn mul_transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        self.mul_transpose_into(u, &mut out);
        out
    }

    /// Column sums `A^T 1`.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.ncols).map(|c| self.column(c).map(|(_, v)| v).sum()).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for c in 0..self.ncols {
            for (r, v) in self.column(c) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Largest singular value estimated by power iteration on `A^T A`,
    /// started from the all-ones vector.
    pub fn norm_estimate(&self, iterations: usize) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let mut v = vec![1.0 / (self.ncols as f64).sqrt(); self.ncols];
        let mut av = vec![0.0; self.nrows];
        let mut est = 0.0;
        for _ in 0..iterations {
            self.mul_into(&v, &mut av);
            self.mul_transpose_into(&av, &mut v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            est = norm.sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        est
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_are_sorted_row_major() {
        let m = BinaryMatrix::from_supports(3, vec![vec![2, 0], vec![1]]).unwrap();
        assert_eq!(m.ones(), vec![(0, 0), (1, 1), (2, 0)]);
        assert_eq!(m.row_weights(), vec![1, 1, 1]);
        assert_eq!(m.column_weights(), vec![2, 1]);
    }

    #[test]
    fn out_of_range_rows_are_rejected() {
        assert!(BinaryMatrix::from_supports(2, vec![vec![2]]).is_none());
        assert!(BinaryMatrix::from_ones(2, 1, &[(0, 1)]).is_none());
    }

    #[test]
    fn csc_products_match_dense() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, -3.0, 4.0]);
        let a = CscMatrix::from_dense(&d);
        assert_eq!(a.mul(&[1.0, 2.0, 3.0]), vec![7.0, 6.0]);
        assert_eq!(a.mul_transpose(&[1.0, -1.0]), vec![1.0, 3.0, -2.0]);
        assert_eq!(a.to_dense(), d);
    }

    #[test]
    fn power_iteration_on_diagonal() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.5]));
        let est = CscMatrix::from_dense(&d).norm_estimate(50);
        assert!((est - 3.0).abs() < 1e-9);
    }
}
