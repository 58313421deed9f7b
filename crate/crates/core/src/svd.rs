//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! The input is orthogonalized column by column on whichever orientation has
//! fewer columns, so the rotation count scales with `min(rows, cols)^2`.

use crate::matrix::{dot, DenseMatrix, MatrixError, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// `m = U diag(σ) Vt` with `U` of shape `rows×r`, `Vt` of shape `r×cols`,
/// `r = min(rows, cols)`, and `σ` sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SvdResult<T> {
    pub u: DenseMatrix<T>,
    pub singular_values: Vec<T>,
    pub vt: DenseMatrix<T>,
}

impl<T: Real> SvdResult<T> {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Number of singular values above `tol * σ₁`.
    pub fn numerical_rank(&self, tol: T) -> usize {
        let top = self
            .singular_values
            .first()
            .copied()
            .unwrap_or_else(T::zero);
        if top == T::zero() {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > tol * top)
            .count()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.rank());
        Self {
            u: self.u.leading_columns(k),
            singular_values: self.singular_values[..k].to_vec(),
            vt: self.vt.leading_rows(k),
        }
    }

    /// `U diag(σ) Vt`.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        self.u
            .column_scale(&self.singular_values)
            .and_then(|us| us.matmul(&self.vt))
            .expect("svd factors are conformable")
    }

    /// Reconstruction with every singular value mapped through `f`; zeros are skipped.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> DenseMatrix<T> {
        let shrunk: Vec<T> = self.singular_values.iter().map(|&s| f(s)).collect();
        let keep: Vec<usize> = (0..shrunk.len())
            .filter(|&i| shrunk[i] != T::zero())
            .collect();
        if keep.is_empty() {
            return DenseMatrix::zeros(self.u.rows(), self.vt.cols());
        }
        let weights: Vec<T> = keep.iter().map(|&i| shrunk[i]).collect();
        self.u
            .select_columns(&keep)
            .column_scale(&weights)
            .and_then(|us| us.matmul(&self.vt.select_rows(&keep)))
            .expect("svd factors are conformable")
    }
}

/// Thin SVD of `m`.
pub fn svd<T: Real>(m: &DenseMatrix<T>) -> Result<SvdResult<T>> {
    if m.is_empty() {
        return Err(MatrixError::Empty("svd"));
    }
    let (rows, cols) = m.shape();
    if rows >= cols {
        // Columns of m are the Jacobi vectors.
        let (left, sigma, right) = jacobi(columns_of(m), cols)?;
        Ok(assemble(left, sigma, right, rows, cols, false))
    } else {
        // Work on mᵀ: its columns are the rows of m.
        let vecs = (0..rows).map(|r| m.row(r).to_vec()).collect();
        let (left, sigma, right) = jacobi(vecs, rows)?;
        Ok(assemble(left, sigma, right, rows, cols, true))
    }
}

/// Singular values only.
pub fn singular_values<T: Real>(m: &DenseMatrix<T>) -> Result<Vec<T>> {
    svd(m).map(|s| s.singular_values)
}

fn columns_of<T: Real>(m: &DenseMatrix<T>) -> Vec<Vec<T>> {
    let t = m.transpose();
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// Orthogonalizes `a` (n vectors of equal length) in place by plane rotations.
/// Returns (normalized left vectors, singular values, right rotation vectors),
/// sorted by decreasing singular value.
#[allow(clippy::type_complexity)]
fn jacobi<T: Real>(mut a: Vec<Vec<T>>, n: usize) -> Result<(Vec<Vec<T>>, Vec<T>, Vec<Vec<T>>)> {
    let len = a[0].len();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut e = vec![T::zero(); n];
            e[i] = T::one();
            e
        })
        .collect();
    let mut norms: Vec<T> = a.iter().map(|c| dot(c, c)).collect();
    let tol = T::epsilon() * T::from_count(len.max(n));

    let mut converged = false;
    let mut sweeps = 0;
    let mut off = T::zero();
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        off = T::zero();
        // Columns this small relative to the largest are numerically zero.
        let top = norms.iter().copied().fold(T::zero(), T::max);
        let negligible = top * tol * tol;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&a[p], &a[q]);
                let rel = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                off = off.max(rel);
                if rel <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                // Exact updates keep the cached norms consistent with the rotation.
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        // Refresh cached norms each sweep to stop drift.
        for (nrm, col) in norms.iter_mut().zip(&a) {
            *nrm = dot(col, col);
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MatrixError::SvdNoConvergence {
            sweeps,
            residual: off.to_f64_lossy(),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let sig: Vec<T> = norms.iter().map(|&x| x.max(T::zero()).sqrt()).collect();
    order.sort_by(|&i, &j| {
        sig[j]
            .partial_cmp(&sig[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let top = sig[order[0]];
    let tiny = top * T::epsilon() * T::from_count(len.max(n));
    let mut left: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for &i in &order {
        let s = sig[i];
        if s > tiny && s > T::zero() {
            left.push(a[i].iter().map(|&x| x / s).collect());
            sigma.push(s);
        } else {
            deficient.push(left.len());
            left.push(vec![T::zero(); len]);
            sigma.push(T::zero());
        }
        right.push(v[i].clone());
    }
    for slot in deficient {
        left[slot] = orthogonal_complement_vector(&left, slot, len);
    }
    Ok((left, sigma, right))
}

fn rotate<T: Real>(vecs: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = vecs.split_at_mut(q);
    let xp = &mut lo[p];
    let xq = &mut hi[0];
    for (x, y) in xp.iter_mut().zip(xq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Unit vector orthogonal to every nonzero vector in `basis` other than `skip`.
fn orthogonal_complement_vector<T: Real>(basis: &[Vec<T>], skip: usize, len: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for e in 0..len {
        let mut cand = vec![T::zero(); len];
        cand[e] = T::one();
        // Two Gram-Schmidt passes for numerical orthogonality.
        for _ in 0..2 {
            for (i, b) in basis.iter().enumerate() {
                if i == skip || b.iter().all(|&x| x == T::zero()) {
                    continue;
                }
                let proj = dot(&cand, b);
                for (c, &bv) in cand.iter_mut().zip(b) {
                    *c -= proj * bv;
                }
            }
        }
        let nrm = dot(&cand, &cand).sqrt();
        if best.as_ref().is_none_or(|(bn, _)| nrm > *bn) {
            best = Some((nrm, cand));
        }
        if nrm > T::lit(0.5) {
            break;
        }
    }
    let (nrm, mut cand) = best.expect("len > 0");
    cand.iter_mut().for_each(|x| *x /= nrm);
    cand
}

fn assemble<T: Real>(
    left: Vec<Vec<T>>,
    sigma: Vec<T>,
    right: Vec<Vec<T>>,
    rows: usize,
    cols: usize,
    transposed: bool,
) -> SvdResult<T> {
    let r = sigma.len();
    if !transposed {
        // left: r vectors of length rows (columns of U); right: columns of V.
        let u = DenseMatrix::from_fn(rows, r, |i, j| left[j][i]).expect("finite");
        let vt = DenseMatrix::from_fn(r, cols, |i, j| right[i][j]).expect("finite");
        SvdResult {
            u,
            singular_values: sigma,
            vt,
        }
    } else {
        // mᵀ = L Σ Rᵀ  ⇒  m = R Σ Lᵀ.
        let u = DenseMatrix::from_fn(rows, r, |i, j| right[j][i]).expect("finite");
        let vt = DenseMatrix::from_fn(r, cols, |i, j| left[i][j]).expect("finite");
        SvdResult {
            u,
            singular_values: sigma,
            vt,
        }
    }
}
