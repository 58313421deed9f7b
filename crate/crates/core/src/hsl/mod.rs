//! Hybrid subspace learning.
//!
//! Decomposes `X ≈ ZA + W diag(b)`: a rank-`k` component shared across
//! features plus a high-dimensional component that each gated feature keeps
//! in the original space. The exclusivity penalty `γ Σ_j |b_j| ‖A(:,j)‖₂`
//! pushes every feature into exactly one of the two components as `γ` grows.

mod objective;
mod path;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{DenseMatrix, MatrixError};
use crate::prox::{lf_project_in_place, ProxError};
use crate::rng::RngStream;
use crate::scalar::Real;

pub use objective::{gradients, l1_norm, loss, objective, overlap, residual, LossGradients};
pub use path::{default_eta, fit_cold_start, fit_warm_start_path, gamma_probe, HslPath};
pub use solver::{fit, fit_inner_wa, fit_inner_zb, InnerFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HslError {
    #[error(transparent)]
    Shape(#[from] MatrixError),
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite objective in the {block} block after {iterations} iterations")]
    NonFinite {
        block: &'static str,
        iterations: usize,
    },
    #[error(
        "warm-start path did not reach zero overlap: gamma={gamma:e}, overlap={overlap:e} after {steps} steps (eta={eta:e})"
    )]
    PathUnbounded {
        gamma: f64,
        overlap: f64,
        steps: usize,
        eta: f64,
    },
}

/// Hyperparameters and solver controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct HslConfig<T> {
    /// Latent dimension.
    pub k: usize,
    /// Weight of `‖b‖₁`.
    pub lambda: T,
    /// Weight of the exclusivity penalty.
    pub gamma: T,
    /// Initial scale of the backtracking step, relative to the block Lipschitz bound.
    pub alpha0: T,
    /// Continuation increment for `γ`; `None` derives it from the data.
    pub eta: Option<T>,
    pub inner_tol: T,
    pub outer_tol: T,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    /// `‖A diag(b)‖_{1,2}` at or below this counts as zero overlap.
    pub overlap_eps: T,
    /// Hard cap on continuation steps.
    pub max_path_steps: usize,
    pub seed: u64,
}

impl<T: Real> Default for HslConfig<T> {
    fn default() -> Self {
        Self {
            k: 1,
            lambda: T::zero(),
            gamma: T::zero(),
            alpha0: T::one(),
            eta: None,
            inner_tol: T::lit(1e-7),
            outer_tol: T::lit(1e-6),
            max_inner_iters: 500,
            max_outer_iters: 100,
            overlap_eps: T::lit(1e-8),
            max_path_steps: 400,
            seed: 0,
        }
    }
}

impl<T: Real> HslConfig<T> {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HslError> {
        let bad = |msg: String| Err(HslError::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v >= T::zero()) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if let Some(eta) = self.eta {
            if !(eta > T::zero()) || !eta.is_finite() {
                return bad(format!("eta must be positive, got {eta}"));
            }
        }
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("inner_tol", self.inner_tol),
            ("outer_tol", self.outer_tol),
        ] {
            if !(v > T::zero()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.overlap_eps >= T::zero()) {
            return bad("overlap_eps must be non-negative".into());
        }
        if self.max_inner_iters == 0 || self.max_outer_iters == 0 {
            return bad("iteration caps must be positive".into());
        }
        Ok(())
    }
}

/// Fitted factors `(Z, A, W, b)` with fit bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct HslModel<T> {
    /// `n × k` scores.
    pub z: DenseMatrix<T>,
    /// `k × p` loadings.
    pub a: DenseMatrix<T>,
    /// `n × p` high-dimensional component.
    pub w: DenseMatrix<T>,
    /// Per-feature gate.
    pub b: Vec<T>,
    pub gamma_at_fit: T,
    pub lambda_at_fit: T,
    /// Full objective after every outer iteration; entry 0 is the initial point.
    pub objective_trace: Vec<T>,
    pub outer_iterations: usize,
    pub converged: bool,
}

impl<T: Real> HslModel<T> {
    /// Random starting point for an `n × p` problem with latent dimension `k`.
    ///
    /// `Z`, `W` entries are Gaussian with variance `1/(n·k)` and `1/(n·p)` and then
    /// projected into the unit Frobenius ball, `A` is Gaussian with variance
    /// `1/k`, and every gate starts at one.
    pub fn random_init(
        n: usize,
        p: usize,
        k: usize,
        rng: &mut RngStream,
    ) -> Result<Self, HslError> {
        let nk = T::from_count(n * k);
        let np = T::from_count(n * p);
        let mut z = rng.gaussian_matrix(n, k, T::zero(), T::one() / nk)?;
        let a = rng.gaussian_matrix(k, p, T::zero(), T::one() / T::from_count(k))?;
        let mut w = rng.gaussian_matrix(n, p, T::zero(), T::one() / np)?;
        lf_project_in_place(&mut z);
        lf_project_in_place(&mut w);
        Ok(Self::from_factors(z, a, w, vec![T::one(); p]))
    }

    pub fn from_factors(
        z: DenseMatrix<T>,
        a: DenseMatrix<T>,
        w: DenseMatrix<T>,
        b: Vec<T>,
    ) -> Self {
        Self {
            z,
            a,
            w,
            b,
            gamma_at_fit: T::zero(),
            lambda_at_fit: T::zero(),
            objective_trace: Vec::new(),
            outer_iterations: 0,
            converged: false,
        }
    }

    pub fn k(&self) -> usize {
        self.z.cols()
    }

    /// `L̂ = ZA`.
    pub fn low_rank(&self) -> DenseMatrix<T> {
        self.z
            .matmul(&self.a)
            .expect("model factors are conformable")
    }

    /// `Ŝ = W diag(b)`.
    pub fn high_dim(&self) -> DenseMatrix<T> {
        self.w
            .column_scale(&self.b)
            .expect("model factors are conformable")
    }

    /// `‖A diag(b)‖_{1,2}`.
    pub fn overlap(&self) -> T {
        overlap(&self.a, &self.b)
    }

    /// Features whose gate magnitude exceeds `zero_tol`.
    pub fn high_dim_support(&self, zero_tol: T) -> Vec<usize> {
        (0..self.b.len())
            .filter(|&j| self.b[j].abs() > zero_tol)
            .collect()
    }

    /// Largest `min(|b_j|, ‖A(:,j)‖₂)` over features; zero when the components are exclusive.
    pub fn max_exclusivity_violation(&self) -> T {
        self.a
            .column_l2_norms()
            .iter()
            .zip(&self.b)
            .map(|(&na, &bj)| na.min(bj.abs()))
            .fold(T::zero(), T::max)
    }

    pub fn objective(&self, x: &DenseMatrix<T>, lambda: T, gamma: T) -> Result<T, HslError> {
        objective(x, &self.z, &self.a, &self.w, &self.b, lambda, gamma)
    }

    pub fn final_objective(&self) -> Option<T> {
        self.objective_trace.last().copied()
    }
}
