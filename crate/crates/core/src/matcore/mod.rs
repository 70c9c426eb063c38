//! Dense real matrices and the norms, selections, and factorizations the
//! estimators are built from.
//!
//! Storage is row-major: `data[i * cols + j]` holds entry `(i, j)`. Every
//! entry is finite; constructors reject NaN and infinities. Zero-sized
//! matrices are allowed so that empty factors (no anchored directions) and
//! empty coefficient blocks have a representation.

mod io;
mod svd;

pub use io::{parse_matrix, read_matrix_file, write_matrix, write_matrix_file};
pub use svd::{
    complete_orthonormal, full_svd, orthonormalize_columns, sin_theta_distance, sym_eigen,
    truncated_svd, OrthoFactor, SvdTriple, SymEigen, NUMERICAL_RANK_TOL, ORTHO_TOL,
};

use std::fmt;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Real `rows x cols` matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != ncols {
                return Err(Error::shape(format!(
                    "row {i} has {} entries, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), ncols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Square matrix with `diag` on the diagonal.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Matrix whose columns are the given vectors (all of length `rows`).
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let cols = columns.len();
        let mut m = Self::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column {j} has wrong length");
            for (i, &x) in c.iter().enumerate() {
                m.data[i * cols + j] = x;
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds without checking finiteness. Callers guarantee the invariant.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self * other`. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (n, m) = (self.rows, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * m..(k + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::from_raw(n, m, out)
    }

    /// `self^T * other` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, other.rows, "t_matmul: row mismatch");
        let (n, m) = (self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out[i * m..(i + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::from_raw(n, m, out)
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_t(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.cols, "matmul_t: column mismatch");
        let (n, m) = (self.rows, other.rows);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = self.row(i);
            for j in 0..m {
                out[i * m + j] = dot(arow, other.row(j));
            }
        }
        DenseMatrix::from_raw(n, m, out)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|x| x * s).collect(),
        )
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        DenseMatrix::from_raw(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Sub-block `[r0, r0+nr) x [c0, c0+nc)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> DenseMatrix {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols);
        DenseMatrix::from_fn(nr, nc, |i, j| self.get(r0 + i, c0 + j))
    }

    /// Columns `[c0, c0+nc)`.
    pub fn columns(&self, c0: usize, nc: usize) -> DenseMatrix {
        self.block(0, c0, self.rows, nc)
    }

    /// Horizontal concatenation `[self other]`.
    pub fn hcat(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.rows, other.rows, "hcat: row mismatch");
        let cols = self.cols + other.cols;
        DenseMatrix::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self.get(i, j)
            } else {
                other.get(i, j - self.cols)
            }
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (acc, &x) in s.iter_mut().zip(self.row(i)) {
                *acc += x;
            }
        }
        s
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.matmul(rhs)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn vec_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn frob_norm(m: &DenseMatrix) -> f64 {
    m.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral norm: the largest singular value.
pub fn op_norm(m: &DenseMatrix) -> Result<f64> {
    let svd = full_svd(m)?;
    Ok(svd.singular_values.first().copied().unwrap_or(0.0))
}

pub fn max_norm(m: &DenseMatrix) -> f64 {
    m.data.iter().fold(0.0, |acc, x| f64::max(acc, x.abs()))
}

/// Number of entries with `|x| > tol`.
pub fn nnz(m: &DenseMatrix, tol: f64) -> usize {
    m.data.iter().filter(|x| x.abs() > tol).count()
}

/// Keeps the `k` largest-magnitude entries and zeroes the rest.
///
/// Equal magnitudes are ranked by row-major position, lower index first.
/// Zero entries are never "kept", so the output has
/// `min(k, nnz(m, 0))` nonzeros.
pub fn hard_threshold_topk(m: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let total = m.rows * m.cols;
    if k > total {
        return Err(Error::invalid(format!(
            "top-k budget {k} exceeds {total} entries"
        )));
    }
    let mut out = DenseMatrix::zeros(m.rows, m.cols);
    if k == 0 {
        return Ok(out);
    }
    let mut idx: Vec<usize> = (0..total).filter(|&i| m.data[i] != 0.0).collect();
    let keep = k.min(idx.len());
    if keep == 0 {
        return Ok(out);
    }
    let by_magnitude = |a: &usize, b: &usize| {
        m.data[*b]
            .abs()
            .total_cmp(&m.data[*a].abs())
            .then(a.cmp(b))
    };
    if keep < idx.len() {
        idx.select_nth_unstable_by(keep - 1, by_magnitude);
    }
    for &i in &idx[..keep] {
        out.data[i] = m.data[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn frob_norm_examples() {
        assert_eq!(frob_norm(&DenseMatrix::zeros(2, 2)), 0.0);
        assert_eq!(frob_norm(&m(&[&[3.0, 4.0], &[0.0, 0.0]])), 5.0);
        assert_eq!(frob_norm(&m(&[&[1.0, 1.0], &[1.0, 1.0]])), 2.0);
    }

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&DenseMatrix::identity(3)).unwrap() - 1.0).abs() < 1e-14);
        assert!((op_norm(&DenseMatrix::from_diag(&[3.0, 1.0])).unwrap() - 3.0).abs() < 1e-14);
        assert!((op_norm(&m(&[&[0.0, 2.0], &[0.0, 0.0]])).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn max_norm_examples() {
        assert_eq!(max_norm(&DenseMatrix::zeros(3, 2)), 0.0);
        assert_eq!(max_norm(&m(&[&[1.0, -7.0], &[2.0, 3.0]])), 7.0);
        assert_eq!(max_norm(&DenseMatrix::identity(2)), 1.0);
    }

    #[test]
    fn nnz_examples() {
        assert_eq!(nnz(&DenseMatrix::zeros(2, 2), 0.0), 0);
        assert_eq!(nnz(&DenseMatrix::identity(3), 0.0), 3);
        assert_eq!(nnz(&m(&[&[1e-13, 2.0]]), 1e-12), 1);
    }

    #[test]
    fn topk_examples() {
        let a = m(&[&[3.0, -5.0], &[1.0, 2.0]]);
        assert_eq!(hard_threshold_topk(&a, 0).unwrap(), DenseMatrix::zeros(2, 2));
        assert_eq!(
            hard_threshold_topk(&a, 2).unwrap(),
            m(&[&[3.0, -5.0], &[0.0, 0.0]])
        );
        assert_eq!(hard_threshold_topk(&a, 4).unwrap(), a);
        assert!(hard_threshold_topk(&a, 5).is_err());
    }

    #[test]
    fn topk_ties_keep_lower_index() {
        let a = m(&[&[1.0, -2.0, 2.0], &[-2.0, 0.5, 2.0]]);
        let out = hard_threshold_topk(&a, 2).unwrap();
        assert_eq!(out, m(&[&[0.0, -2.0, 2.0], &[0.0, 0.0, 0.0]]));
    }

    #[test]
    fn topk_never_keeps_zeros() {
        let a = m(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let out = hard_threshold_topk(&a, 3).unwrap();
        assert_eq!(nnz(&out, 0.0), 1);
        assert_eq!(out, a);
    }

    #[test]
    fn products_agree() {
        let a = m(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let b = m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(a.matmul(&b), m(&[&[4.0, 5.0], &[10.0, 11.0]]));
        assert_eq!(a.transpose().t_matmul(&b), a.matmul(&b));
        assert_eq!(a.matmul_t(&b.transpose()), a.matmul(&b));
    }
}
