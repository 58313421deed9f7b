//! Projection and proximal operators for the HSL penalties.
//!
//! * `lf_project`: Euclidean projection onto the unit Frobenius ball.
//! * `l2_prox`: prox of `u‖·‖₂` (block soft threshold).
//! * `l1_prox`: prox of `u|·|` (scalar soft threshold).

use thiserror::Error;

use crate::matrix::{norm2, DenseMatrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("threshold at index {index} is negative or NaN ({value})")]
    BadThreshold { index: usize, value: f64 },
    #[error("expected {expected} thresholds, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

fn check_threshold<T: Real>(index: usize, u: T) -> Result<(), ProxError> {
    // `!(u >= 0)` also rejects NaN.
    if !(u >= T::zero()) {
        return Err(ProxError::BadThreshold {
            index,
            value: u.to_f64_lossy(),
        });
    }
    Ok(())
}

/// `m / max(1, ‖m‖_F)`. Inputs inside the ball are returned unchanged.
pub fn lf_project<T: Real>(m: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = m.clone();
    lf_project_in_place(&mut out);
    out
}

pub fn lf_project_in_place<T: Real>(m: &mut DenseMatrix<T>) {
    let nrm = m.frobenius_norm();
    if nrm > T::one() {
        m.scale_in_place(T::one() / nrm);
    }
}

/// `a · max(0, ‖a‖₂ − u) / ‖a‖₂`, with the zero vector returned whenever
/// `‖a‖₂ ≤ u` (this includes `a = 0`).
pub fn l2_prox<T: Real>(a: &[T], u: T) -> Result<Vec<T>, ProxError> {
    check_threshold(0, u)?;
    let mut out = a.to_vec();
    shrink_block(&mut out, u);
    Ok(out)
}

#[inline]
fn shrink_block<T: Real>(a: &mut [T], u: T) {
    if u == T::zero() {
        return;
    }
    let nrm = norm2(a);
    if nrm <= u {
        a.iter_mut().for_each(|x| *x = T::zero());
    } else {
        let s = (nrm - u) / nrm;
        a.iter_mut().for_each(|x| *x *= s);
    }
}

/// `sgn(b) · max(0, |b| − u)`.
pub fn l1_prox<T: Real>(b: T, u: T) -> Result<T, ProxError> {
    check_threshold(0, u)?;
    Ok(soft_threshold(b, u))
}

#[inline]
pub(crate) fn soft_threshold<T: Real>(b: T, u: T) -> T {
    if b > u {
        b - u
    } else if b < -u {
        b + u
    } else {
        T::zero()
    }
}

/// Applies `l2_prox` to every column `j` of `m` with threshold `thresholds[j]`.
pub fn columnwise_l2_prox<T: Real>(
    m: &DenseMatrix<T>,
    thresholds: &[T],
) -> Result<DenseMatrix<T>, ProxError> {
    let mut out = m.clone();
    columnwise_l2_prox_in_place(&mut out, thresholds)?;
    Ok(out)
}

pub fn columnwise_l2_prox_in_place<T: Real>(
    m: &mut DenseMatrix<T>,
    thresholds: &[T],
) -> Result<(), ProxError> {
    if thresholds.len() != m.cols() {
        return Err(ProxError::LengthMismatch {
            expected: m.cols(),
            got: thresholds.len(),
        });
    }
    for (j, &u) in thresholds.iter().enumerate() {
        check_threshold(j, u)?;
    }
    let norms = m.column_l2_norms();
    let factors: Vec<T> = norms
        .iter()
        .zip(thresholds)
        .map(|(&nrm, &u)| {
            if u == T::zero() {
                T::one()
            } else if nrm <= u {
                T::zero()
            } else {
                (nrm - u) / nrm
            }
        })
        .collect();
    for r in 0..m.rows() {
        for (x, &f) in m.row_mut(r).iter_mut().zip(&factors) {
            *x *= f;
        }
    }
    Ok(())
}

/// Applies `l1_prox` to every element `v[j]` with threshold `thresholds[j]`.
pub fn elementwise_l1_prox<T: Real>(v: &[T], thresholds: &[T]) -> Result<Vec<T>, ProxError> {
    if thresholds.len() != v.len() {
        return Err(ProxError::LengthMismatch {
            expected: v.len(),
            got: thresholds.len(),
        });
    }
    v.iter()
        .zip(thresholds)
        .enumerate()
        .map(|(j, (&b, &u))| {
            check_threshold(j, u)?;
            Ok(soft_threshold(b, u))
        })
        .collect()
}
