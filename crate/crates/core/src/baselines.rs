//! Comparison decompositions: PCA, robust PCA and outlier pursuit.

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{DenseMatrix, MatrixError};
use crate::prox::soft_threshold;
use crate::scalar::Real;
use crate::svd::{svd, SvdResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("rank {k} outside 1..={max}")]
    RankOutOfRange { k: usize, max: usize },
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
}

/// `X ≈ L + S` with `L` low rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct LowRankSparseDecomposition<T> {
    pub l: DenseMatrix<T>,
    pub s: DenseMatrix<T>,
    pub rank_of_l: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Penalty weight of the final solve (0 for PCA).
    pub lambda: T,
}

/// Controls for the augmented Lagrangian solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmOptions {
    /// Stop once `‖X − L − S‖_F / ‖X‖_F` falls below this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Multiplier growth factor.
    pub rho: f64,
    /// Cap on the penalty parameter, relative to its initial value.
    pub mu_cap_factor: f64,
}

impl Default for AlmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iterations: 1000,
            rho: 1.5,
            mu_cap_factor: 1e7,
        }
    }
}

/// Best rank-`k` approximation by truncated SVD, with `S = 0`.
pub fn pca<T: Real>(
    x: &DenseMatrix<T>,
    k: usize,
) -> Result<LowRankSparseDecomposition<T>, BaselineError> {
    let max = x.rows().min(x.cols());
    if k == 0 || k > max {
        return Err(BaselineError::RankOutOfRange { k, max });
    }
    let l = svd(x)?.truncated(k).reconstruct();
    Ok(LowRankSparseDecomposition {
        s: DenseMatrix::zeros(x.rows(), x.cols()),
        l,
        rank_of_l: k,
        iterations: 1,
        converged: true,
        lambda: T::zero(),
    })
}

/// Singular value thresholding: `U max(Σ − τ, 0) Vᵀ` and its rank.
pub fn singular_value_threshold<T: Real>(
    m: &DenseMatrix<T>,
    tau: T,
) -> Result<(DenseMatrix<T>, usize), MatrixError> {
    let f: SvdResult<T> = svd(m)?;
    let rank = f.singular_values.iter().filter(|&&s| s > tau).count();
    Ok((f.reconstruct_with(|s| (s - tau).max(T::zero())), rank))
}

/// `1/√n` for an `n`-row input.
pub fn default_rpca_lambda<T: Real>(x: &DenseMatrix<T>) -> T {
    T::one() / T::from_count(x.rows().max(1)).sqrt()
}

/// `min ‖L‖_* + λ‖S‖₁  s.t.  X = L + S` by the inexact augmented Lagrangian method.
pub fn rpca<T: Real>(
    x: &DenseMatrix<T>,
    lambda: T,
    opts: &AlmOptions,
) -> Result<LowRankSparseDecomposition<T>, BaselineError> {
    alm(x, lambda, opts, Sparsity::Entrywise)
}

/// Outlier pursuit run on `Xᵀ`: `min ‖L‖_* + λ Σ_i ‖S(i,:)‖₂  s.t.  Xᵀ = L + S`,
/// where rows of the transposed problem are features. The result is returned in
/// the orientation of `x`, so `S` is column-sparse.
pub fn outlier_pursuit<T: Real>(
    x: &DenseMatrix<T>,
    lambda: T,
    opts: &AlmOptions,
) -> Result<LowRankSparseDecomposition<T>, BaselineError> {
    let mut d = alm(&x.transpose(), lambda, opts, Sparsity::Rows)?;
    d.l = d.l.transpose();
    d.s = d.s.transpose();
    Ok(d)
}

/// Outcome of the penalty search in [`outlier_pursuit_with_rank`].
#[derive(Debug, Clone, PartialEq)]
pub struct TunedOutlierPursuit<T> {
    pub decomposition: LowRankSparseDecomposition<T>,
    /// Whether some `λ` produced exactly the requested rank. When not, the
    /// decomposition with the nearest rank is returned.
    pub target_met: bool,
    pub solves: usize,
}

const MAX_BISECTION_STEPS: usize = 40;
const MAX_BRACKET_STEPS: usize = 30;

/// Outlier pursuit with `λ` bisected (geometrically) until `rank(L) = target_rank`.
///
/// `rank(L)` grows with `λ`: small weights let `S` absorb every feature.
pub fn outlier_pursuit_with_rank<T: Real>(
    x: &DenseMatrix<T>,
    target_rank: usize,
    opts: &AlmOptions,
) -> Result<TunedOutlierPursuit<T>, BaselineError> {
    let max = x.rows().min(x.cols());
    if target_rank == 0 || target_rank > max {
        return Err(BaselineError::RankOutOfRange {
            k: target_rank,
            max,
        });
    }
    let mut solves = 0;
    let mut best: Option<LowRankSparseDecomposition<T>> = None;
    let mut solve = |lambda: T,
                     best: &mut Option<LowRankSparseDecomposition<T>>|
     -> Result<usize, BaselineError> {
        let d = outlier_pursuit(x, lambda, opts)?;
        solves += 1;
        let rank = d.rank_of_l;
        debug!("outlier pursuit: lambda {lambda:e} -> rank {rank}");
        let closer = best.as_ref().is_none_or(|b| {
            let (gap, best_gap) = (
                rank.abs_diff(target_rank),
                b.rank_of_l.abs_diff(target_rank),
            );
            gap < best_gap || (gap == best_gap && lambda > b.lambda)
        });
        if closer {
            *best = Some(d);
        }
        Ok(rank)
    };

    let start = T::one() / T::from_count(x.rows().max(x.cols())).sqrt();
    let four = T::lit(4.0);
    let (mut lo, mut hi) = (start, start);
    let mut rank_lo = solve(lo, &mut best)?;
    let mut rank_hi = rank_lo;
    for _ in 0..MAX_BRACKET_STEPS {
        if rank_lo < target_rank {
            break;
        }
        if rank_lo == target_rank {
            return Ok(finish(best, target_rank, solves));
        }
        hi = lo;
        rank_hi = rank_lo;
        lo /= four;
        rank_lo = solve(lo, &mut best)?;
    }
    for _ in 0..MAX_BRACKET_STEPS {
        if rank_hi >= target_rank {
            break;
        }
        lo = hi;
        rank_lo = rank_hi;
        hi *= four;
        rank_hi = solve(hi, &mut best)?;
    }
    if rank_hi == target_rank {
        return Ok(finish(best, target_rank, solves));
    }
    let _ = rank_lo;
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        let rank = solve(mid, &mut best)?;
        if rank == target_rank {
            break;
        }
        if rank < target_rank {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < T::one() + T::lit(1e-9) {
            break;
        }
    }
    Ok(finish(best, target_rank, solves))
}

fn finish<T: Real>(
    best: Option<LowRankSparseDecomposition<T>>,
    target_rank: usize,
    solves: usize,
) -> TunedOutlierPursuit<T> {
    let decomposition = best.expect("at least one solve");
    let target_met = decomposition.rank_of_l == target_rank;
    if !target_met {
        warn!(
            "outlier pursuit: no lambda gives rank {target_rank}; nearest rank {}",
            decomposition.rank_of_l
        );
    }
    TunedOutlierPursuit {
        decomposition,
        target_met,
        solves,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sparsity {
    Entrywise,
    Rows,
}

impl Sparsity {
    /// Prox of `τ · penalty` applied in place.
    fn shrink<T: Real>(self, m: &mut DenseMatrix<T>, tau: T) {
        match self {
            Sparsity::Entrywise => m
                .as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = soft_threshold(*v, tau)),
            Sparsity::Rows => {
                for r in 0..m.rows() {
                    let row = m.row_mut(r);
                    let nrm = crate::matrix::norm2(row);
                    let s = if nrm > tau {
                        (nrm - tau) / nrm
                    } else {
                        T::zero()
                    };
                    row.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
    }

    /// Dual norm of the penalty, used to scale the initial multiplier.
    fn dual_norm<T: Real>(self, m: &DenseMatrix<T>) -> T {
        match self {
            Sparsity::Entrywise => m.max_abs(),
            Sparsity::Rows => m.row_l2_norms().into_iter().fold(T::zero(), T::max),
        }
    }
}

fn alm<T: Real>(
    x: &DenseMatrix<T>,
    lambda: T,
    opts: &AlmOptions,
    sparsity: Sparsity,
) -> Result<LowRankSparseDecomposition<T>, BaselineError> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(BaselineError::BadLambda(lambda.to_f64_lossy()));
    }
    let (n, p) = x.shape();
    let x_norm = x.frobenius_norm();
    let mut l = DenseMatrix::zeros(n, p);
    let mut s = DenseMatrix::zeros(n, p);
    if x_norm == T::zero() {
        return Ok(LowRankSparseDecomposition {
            l,
            s,
            rank_of_l: 0,
            iterations: 0,
            converged: true,
            lambda,
        });
    }

    let spectral = svd(x)?.singular_values[0];
    let mut y = x.scale(T::one() / spectral.max(sparsity.dual_norm(x) / lambda));
    let mut mu = T::lit(1.25) / spectral;
    let mu_cap = mu * T::lit(opts.mu_cap_factor);
    let rho = T::lit(opts.rho);
    let tol = T::lit(opts.tol);

    let mut rank = 0;
    for it in 1..=opts.max_iterations {
        let inv_mu = T::one() / mu;
        // L ← SVT(X − S + Y/μ, 1/μ)
        let mut target = x.sub(&s)?;
        target.axpy(inv_mu, &y)?;
        let (l_new, r) = singular_value_threshold(&target, inv_mu)?;
        l = l_new;
        rank = r;
        // S ← shrink(X − L + Y/μ, λ/μ)
        let mut target = x.sub(&l)?;
        target.axpy(inv_mu, &y)?;
        sparsity.shrink(&mut target, lambda * inv_mu);
        s = target;

        let mut gap = x.sub(&l)?;
        gap.axpy(-T::one(), &s)?;
        let rel = gap.frobenius_norm() / x_norm;
        y.axpy(mu, &gap)?;
        mu = (mu * rho).min(mu_cap);
        if rel < tol {
            return Ok(LowRankSparseDecomposition {
                l,
                s,
                rank_of_l: rank,
                iterations: it,
                converged: true,
                lambda,
            });
        }
    }
    warn!(
        "augmented Lagrangian solver hit {} iterations",
        opts.max_iterations
    );
    Ok(LowRankSparseDecomposition {
        l,
        s,
        rank_of_l: rank,
        iterations: opts.max_iterations,
        converged: false,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::svd::singular_values;

    type M = DenseMatrix<f64>;

    fn low_rank(rng: &mut RngStream, n: usize, p: usize, k: usize) -> M {
        let a: M = rng.gaussian_matrix(n, k, 0.0, 1.0).unwrap();
        let b: M = rng.gaussian_matrix(k, p, 0.0, 1.0).unwrap();
        a.matmul(&b).unwrap()
    }

    #[test]
    fn pca_exact_on_rank_k() {
        let mut rng = RngStream::new(1, 0);
        let x = low_rank(&mut rng, 12, 9, 3);
        let d = pca(&x, 3).unwrap();
        assert!(x.sub(&d.l).unwrap().frobenius_norm() < 1e-9 * x.frobenius_norm());
        assert_eq!(d.s, M::zeros(12, 9));
    }

    #[test]
    fn pca_full_rank_returns_input() {
        let mut rng = RngStream::new(2, 0);
        let x: M = rng.gaussian_matrix(6, 8, 0.0, 1.0).unwrap();
        let d = pca(&x, 6).unwrap();
        assert!(x.sub(&d.l).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn pca_residual_is_spectral_tail() {
        let mut rng = RngStream::new(3, 0);
        let x: M = rng.gaussian_matrix(15, 10, 0.0, 1.0).unwrap();
        let sv = singular_values(&x).unwrap();
        let d = pca(&x, 4).unwrap();
        let tail: f64 = sv[4..].iter().map(|s| s * s).sum();
        let res = x.sub(&d.l).unwrap().frobenius_norm_sq();
        assert!((res - tail).abs() <= 1e-8 * tail);
    }

    #[test]
    fn pca_rejects_bad_rank() {
        assert!(pca(&M::identity(3), 0).is_err());
        assert!(pca(&M::identity(3), 4).is_err());
    }

    #[test]
    fn svt_shrinks_diagonal() {
        let m = M::from_diag(&[5.0, 2.0, 0.5]).unwrap();
        let (out, rank) = singular_value_threshold(&m, 1.0).unwrap();
        assert_eq!(rank, 2);
        let expect = M::from_diag(&[4.0, 1.0, 0.0]).unwrap();
        assert!(out.sub(&expect).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn rpca_zero_input() {
        let d = rpca(&M::zeros(4, 5), 0.5, &AlmOptions::default()).unwrap();
        assert_eq!(d.l, M::zeros(4, 5));
        assert_eq!(d.s, M::zeros(4, 5));
        assert!(d.converged);
    }

    #[test]
    fn rpca_rejects_bad_lambda() {
        assert!(rpca(&M::identity(2), 0.0, &AlmOptions::default()).is_err());
        assert!(rpca(&M::identity(2), f64::NAN, &AlmOptions::default()).is_err());
    }

    #[test]
    fn rpca_recovers_spiked_low_rank() {
        let mut rng = RngStream::new(4, 0);
        let (n, p) = (60, 80);
        let l_true = low_rank(&mut rng, n, p, 3);
        let mut x = l_true.clone();
        let spikes = rng.subset(n * p, n * p / 100);
        for &idx in &spikes {
            let sign = if rng.uniform01::<f64>() < 0.5 {
                -1.0
            } else {
                1.0
            };
            x.as_mut_slice()[idx] += 10.0 * sign;
        }
        let d = rpca(&x, default_rpca_lambda(&x), &AlmOptions::default()).unwrap();
        assert!(d.converged);
        let rel = d.l.sub(&l_true).unwrap().frobenius_norm() / l_true.frobenius_norm();
        assert!(rel < 1e-4, "relative error {rel:e}");
        let support: Vec<usize> = (0..n * p)
            .filter(|&i| d.s.as_slice()[i].abs() > 1e-3)
            .collect();
        assert_eq!(support, spikes);
        let gap = x.sub(&d.l).unwrap().sub(&d.s).unwrap().frobenius_norm() / x.frobenius_norm();
        assert!(gap < 1e-7);
    }

    #[test]
    fn outlier_pursuit_limits() {
        let mut rng = RngStream::new(5, 0);
        let x = low_rank(&mut rng, 20, 15, 2);
        let big = outlier_pursuit(&x, 1e3, &AlmOptions::default()).unwrap();
        assert!(big.s.max_abs() < 1e-9);
        assert!(big.l.sub(&x).unwrap().frobenius_norm() < 1e-6 * x.frobenius_norm());
        let tiny = outlier_pursuit(&x, 1e-4, &AlmOptions::default()).unwrap();
        assert_eq!(tiny.rank_of_l, 0);
        assert!(tiny.s.sub(&x).unwrap().frobenius_norm() < 1e-6 * x.frobenius_norm());
    }

    #[test]
    fn outlier_pursuit_finds_corrupted_features() {
        let mut rng = RngStream::new(6, 0);
        let (n, p) = (40, 30);
        let mut x = low_rank(&mut rng, n, p, 2);
        let outliers = [3usize, 17, 25];
        for &j in &outliers {
            for i in 0..n {
                x.set(i, j, 3.0 * rng.standard_normal::<f64>());
            }
        }
        let d = outlier_pursuit_with_rank(&x, 2, &AlmOptions::default()).unwrap();
        assert!(d.target_met);
        let norms = d.decomposition.s.column_l2_norms();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap());
        let mut top: Vec<usize> = order[..3].to_vec();
        top.sort_unstable();
        assert_eq!(top, outliers);
    }

    #[test]
    fn outlier_pursuit_support_shrinks_with_lambda() {
        let mut rng = RngStream::new(7, 0);
        let x: M = rng.gaussian_matrix(20, 15, 0.0, 1.0).unwrap();
        let mut last = usize::MAX;
        for lambda in [0.05, 0.1, 0.2, 0.4, 0.8, 1.6] {
            let d = outlier_pursuit(&x, lambda, &AlmOptions::default()).unwrap();
            let active = d.s.column_l2_norms().iter().filter(|&&v| v > 1e-8).count();
            assert!(active <= last, "lambda {lambda}: {active} > {last}");
            last = active;
        }
    }
}
