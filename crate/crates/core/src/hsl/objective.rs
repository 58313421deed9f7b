//! Smooth loss, penalties and gradients of the relaxed HSL problem
//!
//! `‖X − ZA − W diag(b)‖_F² + γ Σ_j |b_j| ‖A(:,j)‖₂ + λ ‖b‖₁`.

use crate::matrix::{DenseMatrix, MatrixError};
use crate::scalar::Real;

use super::HslError;

fn check_shapes<T: Real>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    b: &[T],
) -> Result<(), HslError> {
    let (n, p) = x.shape();
    let k = z.cols();
    let ok = z.rows() == n && a.shape() == (k, p) && w.shape() == (n, p) && b.len() == p;
    if ok {
        Ok(())
    } else {
        Err(HslError::Shape(MatrixError::InvalidParameter(format!(
            "X {:?}, Z {:?}, A {:?}, W {:?}, b len {} are not conformable",
            x.shape(),
            z.shape(),
            a.shape(),
            w.shape(),
            b.len()
        ))))
    }
}

/// `R = X − ZA − W diag(b)`.
pub fn residual<T: Real>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    b: &[T],
) -> Result<DenseMatrix<T>, HslError> {
    check_shapes(x, z, a, w, b)?;
    Ok(residual_unchecked(x, &z.matmul(a)?, w, b))
}

/// `X − L − W diag(b)` given a precomputed `L = ZA`.
pub(crate) fn residual_unchecked<T: Real>(
    x: &DenseMatrix<T>,
    low_rank: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    b: &[T],
) -> DenseMatrix<T> {
    let mut r = x.clone();
    let p = x.cols();
    let rs = r.as_mut_slice();
    for ((ri, &li), (idx, &wi)) in rs
        .iter_mut()
        .zip(low_rank.as_slice())
        .zip(w.as_slice().iter().enumerate())
    {
        *ri = *ri - li - wi * b[idx % p];
    }
    r
}

/// Smooth part `‖X − ZA − W diag(b)‖_F²`.
pub fn loss<T: Real>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    b: &[T],
) -> Result<T, HslError> {
    Ok(residual(x, z, a, w, b)?.frobenius_norm_sq())
}

/// Exclusivity penalty `‖A diag(b)‖_{1,2} = Σ_j |b_j| ‖A(:,j)‖₂`.
pub fn overlap<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> T {
    a.column_l2_norms()
        .iter()
        .zip(b)
        .map(|(&n, &bj)| n * bj.abs())
        .sum()
}

pub fn l1_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| x.abs()).sum()
}

/// Full relaxed objective.
pub fn objective<T: Real>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    b: &[T],
    lambda: T,
    gamma: T,
) -> Result<T, HslError> {
    Ok(loss(x, z, a, w, b)? + gamma * overlap(a, b) + lambda * l1_norm(b))
}

/// Gradients of the smooth loss at one point.
#[derive(Debug, Clone)]
pub struct LossGradients<T> {
    pub z: DenseMatrix<T>,
    pub a: DenseMatrix<T>,
    pub w: DenseMatrix<T>,
    pub b: Vec<T>,
}

/// With `R = X − ZA − W diag(b)`:
/// `∇_W = −2 R diag(b)`, `∇_A = −2 Zᵀ R`, `∇_Z = −2 R Aᵀ`, `∇_b(j) = −2 W(:,j)ᵀ R(:,j)`.
pub fn gradients<T: Real>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    b: &[T],
) -> Result<LossGradients<T>, HslError> {
    let r = residual(x, z, a, w, b)?;
    let minus_two = T::lit(-2.0);
    let scaled = |mut m: DenseMatrix<T>| {
        m.scale_in_place(minus_two);
        m
    };
    Ok(LossGradients {
        z: scaled(grad_z(&r, a)),
        a: scaled(grad_a(&r, z)),
        w: scaled(grad_w(&r, b)),
        b: grad_b(&r, w).into_iter().map(|g| g * minus_two).collect(),
    })
}

// Unscaled products; callers multiply by −2.
pub(crate) fn grad_z<T: Real>(r: &DenseMatrix<T>, a: &DenseMatrix<T>) -> DenseMatrix<T> {
    r.matmul_tr(a).expect("conformable")
}

pub(crate) fn grad_a<T: Real>(r: &DenseMatrix<T>, z: &DenseMatrix<T>) -> DenseMatrix<T> {
    z.tr_matmul(r).expect("conformable")
}

pub(crate) fn grad_w<T: Real>(r: &DenseMatrix<T>, b: &[T]) -> DenseMatrix<T> {
    r.column_scale(b).expect("conformable")
}

/// `W(:,j)ᵀ R(:,j)` for every column.
pub(crate) fn grad_b<T: Real>(r: &DenseMatrix<T>, w: &DenseMatrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); r.cols()];
    for i in 0..r.rows() {
        for ((o, &ri), &wi) in out.iter_mut().zip(r.row(i)).zip(w.row(i)) {
            *o += ri * wi;
        }
    }
    out
}
