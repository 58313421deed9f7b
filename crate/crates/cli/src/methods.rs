//! Runs one decomposition method on one data matrix.

use hsl_core::baselines::{
    default_rpca_lambda, outlier_pursuit, outlier_pursuit_with_rank, pca, rpca, AlmOptions,
    LowRankSparseDecomposition,
};
use hsl_core::eval::{aic_grid_search, subspace_error, AicCell};
use hsl_core::hsl::{fit_cold_start, fit_warm_start_path};
use hsl_core::synth::SynthInstance;
use hsl_core::{Matrix, Model};
use log::info;

use crate::config::{BaselineTuning, ExperimentConfig, Method, Selection};
use crate::error::CliError;

/// Multipliers applied to the protocol weight when baselines are oracle-tuned.
const ORACLE_SCALES: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// Estimated components of one method.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    pub l: Matrix,
    pub s: Matrix,
    /// Per-feature weight of the high-dimensional component: the gates for HSL,
    /// the column norms of `S` for the baselines.
    pub feature_weight: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalty weight actually used (`λ` for HSL and the ALM baselines).
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub model: Option<Model>,
    pub aic_cells: Vec<AicCell>,
    pub notes: Vec<String>,
}

impl MethodOutcome {
    fn from_decomposition(
        method: Method,
        d: LowRankSparseDecomposition<f64>,
        lambda: Option<f64>,
    ) -> Self {
        Self {
            method,
            feature_weight: d.s.column_l2_norms(),
            l: d.l,
            s: d.s,
            iterations: d.iterations,
            converged: d.converged,
            lambda,
            gamma: None,
            model: None,
            aic_cells: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// Fits `method` with rank `k`; `seed` drives any random initialization.
pub fn run_method(
    method: Method,
    x: &Matrix,
    k: usize,
    cfg: &ExperimentConfig,
    seed: u64,
    truth: Option<&SynthInstance<f64>>,
) -> Result<MethodOutcome, CliError> {
    let max_rank = x.rows().min(x.cols());
    if k == 0 || k > max_rank {
        return Err(CliError::Usage(format!("k={k} must be in 1..={max_rank}")));
    }
    match method {
        Method::Hsl => run_hsl(x, k, cfg, seed),
        Method::Pca => Ok(MethodOutcome::from_decomposition(method, pca(x, k)?, None)),
        Method::Rpca => run_rpca(x, k, cfg, truth),
        Method::Op => run_op(x, k, cfg, truth),
    }
}

fn run_hsl(
    x: &Matrix,
    k: usize,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<MethodOutcome, CliError> {
    let solver = cfg.solver_config(k, seed);
    let (model, iterations, converged, aic_cells) = match (cfg.hsl.selection, cfg.hsl.gamma) {
        (Selection::Aic, _) => {
            let sel = aic_grid_search(x, &cfg.hsl.lambda_grid, &solver)?;
            info!("aic selected lambda {} gamma {:e}", sel.lambda, sel.gamma);
            let it = sel.model.outer_iterations;
            let conv = sel.model.converged;
            (sel.model, it, conv, sel.cells)
        }
        (Selection::Fixed, Some(gamma)) => {
            let m = fit_cold_start(x, cfg.hsl.lambda, gamma, &solver, 0)?;
            let (it, conv) = (m.outer_iterations, m.converged);
            (m, it, conv, Vec::new())
        }
        (Selection::Fixed, None) => {
            let path = fit_warm_start_path(x, cfg.hsl.lambda, cfg.hsl.eta, &solver)?;
            let it = path.models.iter().map(|m| m.outer_iterations).sum();
            let conv = path.models.iter().all(|m| m.converged);
            (path.into_last(), it, conv, Vec::new())
        }
    };
    Ok(MethodOutcome {
        method: Method::Hsl,
        l: model.low_rank(),
        s: model.high_dim(),
        feature_weight: model.b.iter().map(|v| v.abs()).collect(),
        iterations,
        converged,
        lambda: Some(model.lambda_at_fit),
        gamma: Some(model.gamma_at_fit),
        model: Some(model),
        aic_cells,
        notes: Vec::new(),
    })
}

/// Picks the weight whose decomposition best recovers the true row space.
fn oracle_pick(
    x: &Matrix,
    k: usize,
    base: f64,
    truth: &SynthInstance<f64>,
    solve: impl Fn(f64) -> Result<LowRankSparseDecomposition<f64>, CliError>,
) -> Result<(LowRankSparseDecomposition<f64>, f64), CliError> {
    let basis = truth.true_row_basis()?;
    let k = k.min(x.rows().min(x.cols()));
    let mut best: Option<(f64, LowRankSparseDecomposition<f64>, f64)> = None;
    for scale in ORACLE_SCALES {
        let lambda = base * scale;
        let d = solve(lambda)?;
        let err = subspace_error(&d.l, &basis, k)?;
        if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
            best = Some((err, d, lambda));
        }
    }
    let (_, d, lambda) = best.expect("nonempty grid");
    Ok((d, lambda))
}

fn run_rpca(
    x: &Matrix,
    k: usize,
    cfg: &ExperimentConfig,
    truth: Option<&SynthInstance<f64>>,
) -> Result<MethodOutcome, CliError> {
    let opts = AlmOptions::default();
    let base = cfg.rpca_lambda.unwrap_or_else(|| default_rpca_lambda(x));
    let solve = |l: f64| rpca(x, l, &opts).map_err(CliError::from);
    let mut notes = Vec::new();
    let (d, lambda) = match (cfg.baseline_tuning, truth) {
        (BaselineTuning::Oracle, Some(t)) => oracle_pick(x, k, base, t, solve)?,
        (BaselineTuning::Oracle, None) => {
            notes.push("oracle tuning needs ground truth; used the protocol weight".into());
            (solve(base)?, base)
        }
        (BaselineTuning::Protocol, _) => (solve(base)?, base),
    };
    let mut out = MethodOutcome::from_decomposition(Method::Rpca, d, Some(lambda));
    out.notes = notes;
    Ok(out)
}

fn run_op(
    x: &Matrix,
    k: usize,
    cfg: &ExperimentConfig,
    truth: Option<&SynthInstance<f64>>,
) -> Result<MethodOutcome, CliError> {
    let opts = AlmOptions::default();
    if let (BaselineTuning::Oracle, Some(t)) = (cfg.baseline_tuning, truth) {
        let base = 1.0 / (x.rows().max(x.cols()) as f64).sqrt();
        let (d, lambda) = oracle_pick(x, k, base, t, |l| {
            outlier_pursuit(x, l, &opts).map_err(CliError::from)
        })?;
        return Ok(MethodOutcome::from_decomposition(
            Method::Op,
            d,
            Some(lambda),
        ));
    }
    let tuned = outlier_pursuit_with_rank(x, k, &opts)?;
    let lambda = tuned.decomposition.lambda;
    let mut out = MethodOutcome::from_decomposition(Method::Op, tuned.decomposition, Some(lambda));
    if !tuned.target_met {
        out.notes.push(format!(
            "no lambda reached rank {k}; kept rank {}",
            out_rank(&out)
        ));
    }
    if cfg.baseline_tuning == BaselineTuning::Oracle {
        out.notes
            .push("oracle tuning needs ground truth; bisected to rank k".into());
    }
    Ok(out)
}

fn out_rank(o: &MethodOutcome) -> usize {
    hsl_core::svd::svd(&o.l)
        .map(|s| s.numerical_rank(1e-9))
        .unwrap_or(0)
}
