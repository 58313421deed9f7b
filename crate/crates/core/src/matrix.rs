//! Dense row-major matrices and the handful of kernels the solvers need.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("dimension mismatch in {op}: left is {left:?}, right is {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("operation {0} requires a nonempty matrix")]
    Empty(&'static str),
    #[error("svd did not converge after {sweeps} sweeps (off-diagonal mass {residual:e})")]
    SvdNoConvergence { sweeps: usize, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = MatrixError> = std::result::Result<T, E>;

/// Dense real matrix stored row-major.
///
/// Constructors reject non-finite entries, so a `DenseMatrix` built from
/// outside data is always finite. Arithmetic does not re-check; callers
/// that can overflow (solvers) test their objective instead.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix<T>", into = "RawMatrix<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> TryFrom<RawMatrix<T>> for DenseMatrix<T> {
    type Error = MatrixError;
    fn try_from(raw: RawMatrix<T>) -> Result<Self> {
        DenseMatrix::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl<T: Real> From<DenseMatrix<T>> for RawMatrix<T> {
    fn from(m: DenseMatrix<T>) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl<T: std::fmt::Debug> std::fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let shown: Vec<String> = row.iter().take(8).map(|v| format!("{v:.4?}")).collect();
            let more = if self.cols > 8 { ", ..." } else { "" };
            writeln!(f, "  [{}{}]", shown.join(", "), more)?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(MatrixError::NonFinite { row: 0, col: 0 });
        }
        Ok(Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Diagonal matrix with `values` on the diagonal.
    pub fn from_diag(values: &[T]) -> Result<Self> {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MatrixError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        let m = Self { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(MatrixError::DimensionMismatch {
                    op: "from_rows",
                    left: (r, row.len()),
                    right: (rows.len(), ncols),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(rows.len(), ncols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_vec(rows, cols, data)
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != rows) {
            return Err(MatrixError::DimensionMismatch {
                op: "from_columns",
                left: (columns[bad].len(), 1),
                right: (rows, columns.len()),
            });
        }
        Self::from_fn(rows, columns.len(), |r, c| columns[c][r])
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(MatrixError::NonFinite {
                row: i / self.cols.max(1),
                col: i % self.cols.max(1),
            }),
            None => Ok(()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Mutable access to the raw row-major buffer. Writing non-finite values
    /// through it breaks the finiteness invariant; solver code only.
    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[T]) {
        debug_assert_eq!(values.len(), self.rows);
        for (r, &v) in values.iter().enumerate() {
            self.set(r, c, v);
        }
    }

    /// Copy of the first `n` columns.
    pub fn leading_columns(&self, n: usize) -> Self {
        let n = n.min(self.cols);
        let mut out = Self::zeros(self.rows, n);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[..n]);
        }
        out
    }

    /// Copy of the first `n` rows.
    pub fn leading_rows(&self, n: usize) -> Self {
        let n = n.min(self.rows);
        Self {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            let src = self.row(r);
            for (o, &j) in out.row_mut(r).iter_mut().zip(idx) {
                *o = src[j];
            }
        }
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(MatrixError::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) -> Result<()> {
        self.same_shape(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// `M diag(v)`: column `j` multiplied by `v[j]`.
    pub fn column_scale(&self, v: &[T]) -> Result<Self> {
        if v.len() != self.cols {
            return Err(MatrixError::DimensionMismatch {
                op: "column_scale",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            for (x, &s) in out.row_mut(r).iter_mut().zip(v) {
                *x *= s;
            }
        }
        Ok(out)
    }

    /// `diag(v) M`: row `i` multiplied by `v[i]`.
    pub fn row_scale(&self, v: &[T]) -> Result<Self> {
        if v.len() != self.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "row_scale",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        let mut out = self.clone();
        for (r, &s) in v.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(MatrixError::DimensionMismatch {
                op: "tr_matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_tr(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(MatrixError::DimensionMismatch {
                op: "matmul_tr",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        // Scaled accumulation so huge entries do not overflow the sum of squares.
        let scale = self.max_abs();
        if scale == T::zero() {
            return T::zero();
        }
        let s: T = self.data.iter().map(|&v| (v / scale) * (v / scale)).sum();
        scale * s.sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn column_l2_norms(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(r)) {
                *a += v * v;
            }
        }
        acc.into_iter().map(Float::sqrt).collect()
    }

    pub fn row_l2_norms(&self) -> Vec<T> {
        (0..self.rows).map(|r| norm2(self.row(r))).collect()
    }

    /// Inner product `<self, other>` under the Frobenius pairing.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "dot")?;
        Ok(dot(&self.data, &other.data))
    }
}

use num_traits::Float;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = DenseMatrix<f64>;

    #[test]
    fn identity_times_matrix_is_matrix() {
        let m = M::from_rows(&[vec![1.0, -2.0, 0.5], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(M::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn hand_multiplication() {
        let a = M::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = M::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c, M::from_rows(&[vec![2.0], vec![4.0]]).unwrap());
    }

    #[test]
    fn zero_annihilates() {
        let a = M::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.matmul(&M::zeros(2, 3)).unwrap(), M::zeros(2, 3));
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = M::zeros(2, 3);
        assert!(matches!(
            a.matmul(&M::zeros(2, 3)),
            Err(MatrixError::DimensionMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn transposed_products_agree_with_explicit() {
        let a = M::from_fn(4, 3, |r, c| (r as f64 + 1.0) * (c as f64 - 1.5)).unwrap();
        let b = M::from_fn(4, 2, |r, c| (r * c) as f64 - 0.5).unwrap();
        assert_eq!(a.tr_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
        let d = M::from_fn(5, 3, |r, c| (r + 2 * c) as f64).unwrap();
        assert_eq!(a.matmul_tr(&d).unwrap(), a.matmul(&d.transpose()).unwrap());
    }

    #[test]
    fn norms() {
        assert_eq!(M::zeros(3, 2).frobenius_norm(), 0.0);
        let v = M::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(v.frobenius_norm(), 5.0);
        let m = M::from_rows(&[vec![3.0, 0.0], vec![4.0, -2.0]]).unwrap();
        assert_eq!(m.column_l2_norms(), vec![5.0, 2.0]);
    }

    #[test]
    fn column_scale_of_identity_is_diagonal() {
        let out = M::identity(3).column_scale(&[2.0, 0.0, 1.0]).unwrap();
        assert_eq!(out, M::from_diag(&[2.0, 0.0, 1.0]).unwrap());
        assert!(M::identity(3).column_scale(&[1.0]).is_err());
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(matches!(
            M::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(MatrixError::NonFinite { row: 0, col: 1 })
        ));
        assert!(M::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(M::filled(1, 1, f64::INFINITY).is_err());
    }

    #[test]
    fn serde_validates() {
        let m = M::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: M = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<M>(r#"{"rows":2,"cols":2,"data":[1.0]}"#).is_err());
    }
}
