//! Warm-start continuation in `γ`.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::matrix::{norm2, DenseMatrix};
use crate::rng::RngStream;
use crate::scalar::Real;

use super::objective::residual;
use super::solver::fit;
use super::{HslConfig, HslError, HslModel};

/// Number of continuation steps the data-driven increment aims for.
const TARGET_PATH_STEPS: f64 = 30.0;

/// Models fitted along `γ = 0, η, 2η, …` until the exclusivity penalty vanishes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct HslPath<T> {
    pub models: Vec<HslModel<T>>,
    pub eta: T,
}

impl<T: Real> HslPath<T> {
    /// Model at `γ_max`, the first `γ` on the grid with zero overlap.
    pub fn last(&self) -> &HslModel<T> {
        self.models
            .last()
            .expect("path holds at least the γ = 0 fit")
    }

    pub fn gamma_max(&self) -> T {
        self.last().gamma_at_fit
    }

    pub fn gammas(&self) -> Vec<T> {
        self.models.iter().map(|m| m.gamma_at_fit).collect()
    }

    /// Path element whose `γ` is closest to `gamma`.
    pub fn nearest(&self, gamma: T) -> &HslModel<T> {
        self.models
            .iter()
            .min_by(|a, b| {
                let da = (a.gamma_at_fit - gamma).abs();
                let db = (b.gamma_at_fit - gamma).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty path")
    }

    pub fn into_last(mut self) -> HslModel<T> {
        self.models.pop().expect("nonempty path")
    }
}

/// Smallest `γ` at which, holding the rest of `model` fixed, every feature that
/// still sits in both components would lose one of them in a single block
/// update.
///
/// For feature `j` the loadings column dies once `γ|b_j| ≥ 2‖Zᵀ r_j‖` with
/// `r_j = X(:,j) − W(:,j) b_j`, and the gate dies once
/// `γ‖A(:,j)‖ + λ ≥ 2|W(:,j)ᵀ(X(:,j) − Z A(:,j))|`; the cheaper of the two counts.
pub fn gamma_probe<T: Real>(
    x: &DenseMatrix<T>,
    model: &HslModel<T>,
    lambda: T,
) -> Result<T, HslError> {
    let r = residual(x, &model.z, &model.a, &model.w, &model.b)?;
    let a_norms = model.a.column_l2_norms();
    let two = T::lit(2.0);
    let mut probe = T::zero();
    for j in 0..x.cols() {
        let bj = model.b[j];
        let na = a_norms[j];
        if bj == T::zero() || na == T::zero() {
            continue;
        }
        let r_j = r.column(j);
        let w_j = model.w.column(j);
        let za_j: Vec<T> = (0..x.rows())
            .map(|i| crate::matrix::dot(model.z.row(i), &model.a.column(j)))
            .collect();
        // Residual with A(:,j) removed, and with b_j removed.
        let without_a: Vec<T> = r_j.iter().zip(&za_j).map(|(&r, &l)| r + l).collect();
        let without_b: Vec<T> = r_j.iter().zip(&w_j).map(|(&r, &w)| r + w * bj).collect();
        let zt_r: Vec<T> = (0..model.k())
            .map(|l| {
                (0..x.rows())
                    .map(|i| model.z.get(i, l) * without_a[i])
                    .sum()
            })
            .collect();
        let kill_a = two * norm2(&zt_r) / bj.abs();
        let wt_r: T = crate::matrix::dot(&w_j, &without_b);
        let kill_b = (two * wt_r.abs() - lambda).max(T::zero()) / na;
        probe = probe.max(kill_a.min(kill_b));
    }
    Ok(probe)
}

/// Continuation increment `γ_probe / 30` measured at `model`, falling back to
/// a scale derived from the data when the probe is degenerate.
pub fn default_eta<T: Real>(
    x: &DenseMatrix<T>,
    model: &HslModel<T>,
    lambda: T,
) -> Result<T, HslError> {
    let probe = gamma_probe(x, model, lambda)?;
    let eta = probe / T::lit(TARGET_PATH_STEPS);
    if eta > T::zero() && eta.is_finite() {
        Ok(eta)
    } else {
        // No overlap to remove: any positive increment ends the path at once.
        let scale = x.column_l2_norms().into_iter().fold(T::zero(), T::max);
        Ok((T::lit(2.0) * scale / T::lit(TARGET_PATH_STEPS)).max(T::epsilon()))
    }
}

/// Fits at `γ = 0` from a random start, then repeatedly raises `γ` by `η` and
/// refits from the previous estimate until `‖A diag(b)‖_{1,2} ≤ overlap_eps`.
///
/// `eta = None` uses `config.eta`, and if that is unset too, [`default_eta`]
/// evaluated at the `γ = 0` fit.
pub fn fit_warm_start_path<T: Real>(
    x: &DenseMatrix<T>,
    lambda: T,
    eta: Option<T>,
    config: &HslConfig<T>,
) -> Result<HslPath<T>, HslError> {
    let mut cfg = config.clone();
    cfg.lambda = lambda;
    cfg.gamma = T::zero();
    cfg.eta = eta.or(config.eta);
    cfg.validate()?;

    let (n, p) = x.shape();
    let mut rng = RngStream::new(cfg.seed, 0);
    let init = HslModel::random_init(n, p, cfg.k, &mut rng)?;
    let mut model = fit(x, &cfg, init)?;
    let eta = match cfg.eta {
        Some(e) => e,
        None => default_eta(x, &model, lambda)?,
    };
    info!("warm-start path: eta = {eta:e}");

    let mut models = vec![model.clone()];
    let mut steps = 0;
    while model.overlap() > cfg.overlap_eps {
        if steps >= cfg.max_path_steps {
            return Err(HslError::PathUnbounded {
                gamma: cfg.gamma.to_f64_lossy(),
                overlap: model.overlap().to_f64_lossy(),
                steps,
                eta: eta.to_f64_lossy(),
            });
        }
        steps += 1;
        cfg.gamma = T::from_count(steps) * eta;
        model = fit(x, &cfg, model)?;
        debug!(
            "gamma {:e}: objective {:e}, overlap {:e}, outer {}",
            cfg.gamma,
            model.final_objective().unwrap_or_else(T::nan),
            model.overlap(),
            model.outer_iterations
        );
        models.push(model.clone());
    }
    Ok(HslPath { models, eta })
}

/// Single fit at fixed `γ` from a fresh random start drawn from `stream_id`.
pub fn fit_cold_start<T: Real>(
    x: &DenseMatrix<T>,
    lambda: T,
    gamma: T,
    config: &HslConfig<T>,
    stream_id: u64,
) -> Result<HslModel<T>, HslError> {
    let mut cfg = config.clone();
    cfg.lambda = lambda;
    cfg.gamma = gamma;
    cfg.validate()?;
    let (n, p) = x.shape();
    let mut rng = RngStream::new(cfg.seed, stream_id);
    let init = HslModel::random_init(n, p, cfg.k, &mut rng)?;
    fit(x, &cfg, init)
}
