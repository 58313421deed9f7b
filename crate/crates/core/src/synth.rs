//! Synthetic data with known low-rank and high-dimensional ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{DenseMatrix, MatrixError};
use crate::rng::RngStream;
use crate::scalar::Real;
use crate::svd::svd;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("could not draw full-rank factors after {0} attempts")]
    RankDeficient(usize),
}

/// How features are split between the components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "count")]
pub enum Membership {
    /// One categorical draw from `θ` per feature.
    #[default]
    Categorical,
    /// Exactly this many features are high-dimensional only; the rest are low-rank only.
    FixedHighDim(usize),
}

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Per-entry noise variance.
    pub sigma2: f64,
    /// Probabilities of (low-rank only, high-dimensional only, both).
    pub theta: [f64; 3],
    pub seed: u64,
    #[serde(default)]
    pub membership: Membership,
}

impl SynthSpec {
    /// `n=100, p=200, k=20, σ²=1, θ=(0.9, 0.1, 0)`.
    pub fn default_benchmark(seed: u64) -> Self {
        Self {
            n: 100,
            p: 200,
            k: 20,
            sigma2: 1.0,
            theta: [0.9, 0.1, 0.0],
            seed,
            membership: Membership::Categorical,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n == 0 || self.p == 0 || self.k == 0 {
            return bad("n, p and k must be positive".into());
        }
        if self.k > self.n.min(self.p) {
            return bad(format!(
                "k={} exceeds min(n, p)={}",
                self.k,
                self.n.min(self.p)
            ));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return bad(format!(
                "sigma2 must be finite and non-negative, got {}",
                self.sigma2
            ));
        }
        if self.theta.iter().any(|&t| !(t >= 0.0))
            || (self.theta.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "theta {:?} must be non-negative and sum to 1",
                self.theta
            ));
        }
        if let Membership::FixedHighDim(s) = self.membership {
            if s > self.p {
                return bad(format!("fixed high-d count {s} exceeds p={}", self.p));
            }
        }
        Ok(())
    }
}

/// Generated data plus the factors that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SynthInstance<T> {
    pub spec: SynthSpec,
    pub x: DenseMatrix<T>,
    pub true_z: DenseMatrix<T>,
    pub true_a: DenseMatrix<T>,
    pub true_w: DenseMatrix<T>,
    pub true_b: Vec<T>,
    /// Features with a nonzero loadings column.
    pub support_lowr: Vec<usize>,
    /// Features with a nonzero gate.
    pub support_highd: Vec<usize>,
}

impl<T: Real> SynthInstance<T> {
    /// `Z A`.
    pub fn low_rank(&self) -> DenseMatrix<T> {
        self.true_z.matmul(&self.true_a).expect("conformable")
    }

    /// `W diag(b)`.
    pub fn high_dim(&self) -> DenseMatrix<T> {
        self.true_w.column_scale(&self.true_b).expect("conformable")
    }

    /// Orthonormal `p × r` basis of the true low-rank row space, `r = rank(A)`.
    pub fn true_row_basis(&self) -> Result<DenseMatrix<T>, MatrixError> {
        let s = svd(&self.true_a)?;
        let r = s.numerical_rank(T::lit(1e-10));
        Ok(s.vt.leading_rows(r).transpose())
    }
}

const SHELL_LO: f64 = 0.5;
const SHELL_HI: f64 = 1.5;
const RANK_ATTEMPTS: usize = 16;

// Independent sub-streams so that changing one component's law leaves the
// others' draws untouched.
const STREAM_Z: u64 = 1;
const STREAM_W: u64 = 2;
const STREAM_A: u64 = 3;
const STREAM_B: u64 = 4;
const STREAM_MEMBERSHIP: u64 = 5;
const STREAM_NOISE: u64 = 6;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    LowRank,
    HighDim,
    Both,
}

fn draw_roles(spec: &SynthSpec, rng: &mut RngStream) -> Result<Vec<Role>, SynthError> {
    match spec.membership {
        Membership::Categorical => (0..spec.p)
            .map(|_| {
                Ok(match rng.categorical(&spec.theta)? {
                    0 => Role::LowRank,
                    1 => Role::HighDim,
                    _ => Role::Both,
                })
            })
            .collect(),
        Membership::FixedHighDim(s) => {
            let mut roles = vec![Role::LowRank; spec.p];
            for j in rng.subset(spec.p, s) {
                roles[j] = Role::HighDim;
            }
            Ok(roles)
        }
    }
}

/// `X = Z A + W diag(b) + E` with `Z, W, E` Gaussian, `A` uniform on
/// `±[0.5, 1.5]`, `b` uniform on `√k · ±[0.5, 1.5]`, and feature roles drawn
/// from `θ` (or fixed, see [`Membership`]). Features in both components keep
/// their loadings column and their gate.
pub fn generate_hybrid<T: Real>(spec: &SynthSpec) -> Result<SynthInstance<T>, SynthError> {
    spec.validate()?;
    generate(spec, false)
}

/// Per-feature categorical model: each column is drawn either from the
/// rank-`k` factorization or from its own independent high-dimensional
/// column, plus noise. Requires `θ₃ = 0`; the factors are redrawn until
/// `Z` has full column rank and `A` restricted to the low-rank features has
/// full row rank (when there are at least `k` of them).
pub fn generate_categorical<T: Real>(spec: &SynthSpec) -> Result<SynthInstance<T>, SynthError> {
    spec.validate()?;
    if spec.theta[2] != 0.0 {
        return Err(SynthError::InvalidSpec(format!(
            "categorical generator needs theta_3 = 0, got {}",
            spec.theta[2]
        )));
    }
    generate(spec, true)
}

fn full_column_rank<T: Real>(m: &DenseMatrix<T>) -> Result<bool, MatrixError> {
    let s = svd(m)?;
    Ok(s.numerical_rank(T::lit(1e-10)) == m.cols().min(m.rows()))
}

fn generate<T: Real>(
    spec: &SynthSpec,
    require_full_rank: bool,
) -> Result<SynthInstance<T>, SynthError> {
    let (n, p, k) = (spec.n, spec.p, spec.k);
    let base = RngStream::new(spec.seed, 0);
    let lo = T::lit(SHELL_LO);
    let hi = T::lit(SHELL_HI);
    let sqrt_k = T::from_count(k).sqrt();

    let roles = draw_roles(spec, &mut base.fork(STREAM_MEMBERSHIP))?;

    let mut z_rng = base.fork(STREAM_Z);
    let mut a_rng = base.fork(STREAM_A);
    let mut attempts = 0;
    let (z, mut a) = loop {
        attempts += 1;
        let z = z_rng.gaussian_matrix(n, k, T::zero(), T::one())?;
        let a = DenseMatrix::from_fn(k, p, |_, _| {
            a_rng.uniform_shell(lo, hi).expect("valid shell")
        })?;
        if !require_full_rank {
            break (z, a);
        }
        let low: Vec<usize> = (0..p).filter(|&j| roles[j] == Role::LowRank).collect();
        let a_ok = low.len() < k || full_column_rank(&a.select_columns(&low).transpose())?;
        if full_column_rank(&z)? && a_ok {
            break (z, a);
        }
        if attempts >= RANK_ATTEMPTS {
            return Err(SynthError::RankDeficient(attempts));
        }
    };
    let w = base
        .fork(STREAM_W)
        .gaussian_matrix(n, p, T::zero(), T::one())?;
    let mut b_rng = base.fork(STREAM_B);
    let mut b: Vec<T> = (0..p)
        .map(|_| b_rng.uniform_shell(lo, hi).map(|v| v * sqrt_k))
        .collect::<Result<_, _>>()?;

    for (j, role) in roles.iter().enumerate() {
        match role {
            Role::LowRank => b[j] = T::zero(),
            Role::HighDim => {
                for l in 0..k {
                    a.set(l, j, T::zero());
                }
            }
            Role::Both => {}
        }
    }

    let mut x = z.matmul(&a)?.add(&w.column_scale(&b)?)?;
    if spec.sigma2 > 0.0 {
        let noise =
            base.fork(STREAM_NOISE)
                .gaussian_matrix(n, p, T::zero(), T::lit(spec.sigma2))?;
        x = x.add(&noise)?;
    }

    let support_lowr = (0..p).filter(|&j| roles[j] != Role::HighDim).collect();
    let support_highd = (0..p).filter(|&j| b[j] != T::zero()).collect();
    Ok(SynthInstance {
        spec: spec.clone(),
        x,
        true_z: z,
        true_a: a,
        true_w: w,
        true_b: b,
        support_lowr,
        support_highd,
    })
}
