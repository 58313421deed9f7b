//! Recovery metrics, model selection and spectrum summaries.

mod cluster;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hsl::{fit_warm_start_path, HslConfig, HslError, HslModel};
use crate::matrix::{DenseMatrix, MatrixError};
use crate::scalar::Real;
use crate::svd::{singular_values, svd};

pub use cluster::{kmeans, silhouette, KMeansResult};

/// Gate magnitudes at or below this count as zero when reading off a support.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Fit(#[from] HslError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Normalized distance between the projector onto `span(true_basis)` and the
/// projector onto the top-`k` right singular subspace of `l_hat`:
/// `‖VVᵀ − V̂V̂ᵀ‖_F / √(2k)`, which lies in `[0, 1]` and is 1 for orthogonal subspaces.
///
/// `true_basis` is `p × k` with orthonormal columns.
pub fn subspace_error<T: Real>(
    l_hat: &DenseMatrix<T>,
    true_basis: &DenseMatrix<T>,
    k: usize,
) -> Result<T, EvalError> {
    if k == 0 || k > l_hat.rows().min(l_hat.cols()) {
        return Err(EvalError::InvalidArgument(format!(
            "k={k} must be in 1..=min{:?}",
            l_hat.shape()
        )));
    }
    if true_basis.rows() != l_hat.cols() {
        return Err(EvalError::InvalidArgument(format!(
            "basis has {} rows, estimate has {} columns",
            true_basis.rows(),
            l_hat.cols()
        )));
    }
    let est = svd(l_hat)?.vt.leading_rows(k);
    projector_distance(true_basis, &est.transpose(), k)
}

/// `‖P₁ − P₂‖_F / √(2k)` for orthonormal bases `v1` (`p × r₁`) and `v2` (`p × r₂`),
/// using `‖P₁ − P₂‖_F² = r₁ + r₂ − 2‖V₁ᵀV₂‖_F²`.
pub fn projector_distance<T: Real>(
    v1: &DenseMatrix<T>,
    v2: &DenseMatrix<T>,
    k: usize,
) -> Result<T, EvalError> {
    let cross = v1.tr_matmul(v2)?.frobenius_norm_sq();
    let sq = T::from_count(v1.cols() + v2.cols()) - T::lit(2.0) * cross;
    let d = (sq.max(T::zero()) / T::from_count(2 * k)).sqrt();
    Ok(d.min(T::one()))
}

/// Frobenius distance of a high-dimensional component estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SRecovery<T> {
    pub raw: T,
    /// `raw / ‖S_true‖_F`; equals `raw` when `S_true = 0`.
    pub normalized: T,
}

pub fn s_recovery_error<T: Real>(
    s_hat: &DenseMatrix<T>,
    s_true: &DenseMatrix<T>,
) -> Result<SRecovery<T>, EvalError> {
    let raw = s_hat.sub(s_true)?.frobenius_norm();
    let denom = s_true.frobenius_norm();
    let normalized = if denom > T::zero() { raw / denom } else { raw };
    Ok(SRecovery { raw, normalized })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `{j : |b_hat[j]| > zero_tol}` against `support_true`.
///
/// Both supports empty scores 1 across the board; exactly one empty scores 0.
pub fn support_f1<T: Real>(b_hat: &[T], support_true: &[usize], zero_tol: T) -> SupportScore {
    let predicted: Vec<usize> = (0..b_hat.len())
        .filter(|&j| b_hat[j].abs() > zero_tol)
        .collect();
    support_f1_sets(&predicted, support_true)
}

/// Set version of [`support_f1`].
pub fn support_f1_sets(predicted: &[usize], truth: &[usize]) -> SupportScore {
    use std::collections::BTreeSet;
    let p: BTreeSet<usize> = predicted.iter().copied().collect();
    let t: BTreeSet<usize> = truth.iter().copied().collect();
    match (p.is_empty(), t.is_empty()) {
        (true, true) => {
            return SupportScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        }
        (true, false) | (false, true) => {
            return SupportScore {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            }
        }
        _ => {}
    }
    let tp = p.intersection(&t).count() as f64;
    let precision = tp / p.len() as f64;
    let recall = tp / t.len() as f64;
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    SupportScore {
        precision,
        recall,
        f1,
    }
}

/// `‖X − L̂‖_F`.
pub fn reconstruction_error<T: Real>(
    x: &DenseMatrix<T>,
    l_hat: &DenseMatrix<T>,
) -> Result<T, EvalError> {
    Ok(x.sub(l_hat)?.frobenius_norm())
}

/// Degrees of freedom charged by [`aic_score`]: `k(n + p)` for the low-rank
/// factors plus `n + 1` (a column of `W` and its gate) per active feature.
pub fn hsl_degrees_of_freedom<T: Real>(model: &HslModel<T>, zero_tol: T) -> usize {
    let (n, k) = model.z.shape();
    let p = model.a.cols();
    k * (n + p) + (n + 1) * model.high_dim_support(zero_tol).len()
}

/// `n·p·ln(RSS/(n·p)) + 2·df` with `RSS = ‖X − ZA − W diag(b)‖_F²`.
///
/// A gate counts as active when it is exactly nonzero.
pub fn aic_score<T: Real>(x: &DenseMatrix<T>, model: &HslModel<T>) -> Result<T, EvalError> {
    let rss = crate::hsl::loss(x, &model.z, &model.a, &model.w, &model.b)?;
    let df = hsl_degrees_of_freedom(model, T::zero());
    Ok(aic_from_rss(rss, x.rows() * x.cols(), df))
}

pub fn aic_from_rss<T: Real>(rss: T, cells: usize, df: usize) -> T {
    let np = T::from_count(cells);
    // Guard the log at an exact fit.
    let rss = rss.max(T::min_positive_value());
    np * (rss / np).ln() + T::lit(2.0) * T::from_count(df)
}

/// One `(λ, γ)` cell visited by [`aic_grid_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AicCell {
    pub lambda: f64,
    pub gamma: f64,
    pub aic: f64,
    pub active: usize,
}

#[derive(Debug, Clone)]
pub struct AicSelection<T> {
    pub model: HslModel<T>,
    pub lambda: T,
    pub gamma: T,
    pub aic: T,
    /// Every cell in visiting order: `λ` in grid order, `γ` along each path.
    pub cells: Vec<AicCell>,
}

/// Runs a warm-start path for every `λ` in `lambdas` and keeps the path model
/// with the smallest AIC. Ties go to the earliest cell.
pub fn aic_grid_search<T: Real>(
    x: &DenseMatrix<T>,
    lambdas: &[T],
    config: &HslConfig<T>,
) -> Result<AicSelection<T>, EvalError> {
    if lambdas.is_empty() {
        return Err(EvalError::InvalidArgument("empty lambda grid".into()));
    }
    let mut best: Option<AicSelection<T>> = None;
    let mut cells = Vec::new();
    for &lambda in lambdas {
        let path = fit_warm_start_path(x, lambda, None, config)?;
        for model in path.models {
            let aic = aic_score(x, &model)?;
            cells.push(AicCell {
                lambda: lambda.to_f64_lossy(),
                gamma: model.gamma_at_fit.to_f64_lossy(),
                aic: aic.to_f64_lossy(),
                active: model.high_dim_support(T::zero()).len(),
            });
            if best.as_ref().is_none_or(|b| aic < b.aic) {
                best = Some(AicSelection {
                    lambda,
                    gamma: model.gamma_at_fit,
                    aic,
                    model,
                    cells: Vec::new(),
                });
            }
        }
    }
    let mut selection = best.expect("nonempty grid");
    selection.cells = cells;
    Ok(selection)
}

/// Singular value spectrum with head and tail summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumProfile {
    pub singular_values: Vec<f64>,
    /// `σ_{k+1} / σ₁` (0 when there is no `(k+1)`-th value).
    pub head_drop_ratio: f64,
    /// `σ_k / σ₁`.
    pub head_kth_ratio: f64,
    /// `σ_{⌈r/2⌉} / σ₁` with `r = min(n, p)`.
    pub tail_half_ratio: f64,
    /// `σ_r / σ₁`.
    pub last_ratio: f64,
    /// Share of `Σσ²` carried by the top `k` values.
    pub head_energy: f64,
}

pub fn spectrum_profile<T: Real>(
    x: &DenseMatrix<T>,
    k: usize,
) -> Result<SpectrumProfile, EvalError> {
    let s: Vec<f64> = singular_values(x)?
        .into_iter()
        .map(|v| v.to_f64_lossy())
        .collect();
    let r = s.len();
    if k == 0 || k > r {
        return Err(EvalError::InvalidArgument(format!(
            "k={k} must be in 1..={r}"
        )));
    }
    let top = s[0];
    let ratio = |i: usize| if top > 0.0 { s[i] / top } else { 0.0 };
    let total: f64 = s.iter().map(|v| v * v).sum();
    let head: f64 = s[..k].iter().map(|v| v * v).sum();
    Ok(SpectrumProfile {
        head_drop_ratio: if k < r { ratio(k) } else { 0.0 },
        head_kth_ratio: ratio(k - 1),
        tail_half_ratio: ratio(r.div_ceil(2) - 1),
        last_ratio: ratio(r - 1),
        head_energy: if total > 0.0 { head / total } else { 0.0 },
        singular_values: s,
    })
}

/// Metrics of one fit, serialized into run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitReport {
    pub method_name: String,
    pub subspace_error: Option<f64>,
    pub s_error: Option<f64>,
    pub s_error_normalized: Option<f64>,
    pub f1: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub reconstruction_error: f64,
    pub silhouette: Option<f64>,
    pub aic: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_seconds: f64,
    pub seed: u64,
}

impl FitReport {
    /// Checks the range invariants of the metric fields.
    pub fn validate(&self) -> Result<(), EvalError> {
        let unit = [self.f1, self.precision, self.recall];
        if unit.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(EvalError::InvalidArgument(
                "f1/precision/recall outside [0, 1]".into(),
            ));
        }
        let nonneg = [
            self.subspace_error,
            self.s_error,
            Some(self.reconstruction_error),
        ];
        if nonneg.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(EvalError::InvalidArgument("negative error metric".into()));
        }
        Ok(())
    }
}
