//! Metrics of fitted outcomes and the JSON report document.

use std::collections::BTreeMap;

use hsl_core::eval::{
    aic_score, kmeans, reconstruction_error, s_recovery_error, silhouette, subspace_error,
    support_f1, FitReport, DEFAULT_ZERO_TOL,
};
use hsl_core::rng::mix_stream_id;
use hsl_core::svd::svd;
use hsl_core::synth::SynthInstance;
use hsl_core::{Matrix, RngStream};
use serde::Serialize;

use crate::config::{ExperimentConfig, OMITTED_METHODS};
use crate::error::CliError;
use crate::io::SCHEMA_VERSION;
use crate::methods::MethodOutcome;

const KMEANS_RESTARTS: usize = 10;

/// Scores `outcome` against `x` and, when available, the ground truth.
pub fn evaluate(
    x: &Matrix,
    k: usize,
    outcome: &MethodOutcome,
    truth: Option<&SynthInstance<f64>>,
    clusters: Option<usize>,
    seed: u64,
    wall_time_seconds: f64,
) -> Result<FitReport, CliError> {
    let mut r = FitReport {
        method_name: outcome.method.name().to_string(),
        reconstruction_error: reconstruction_error(x, &outcome.l)?,
        iterations: outcome.iterations,
        converged: outcome.converged,
        wall_time_seconds,
        seed,
        ..FitReport::default()
    };
    if let Some(t) = truth {
        let basis = t.true_row_basis()?;
        r.subspace_error = Some(subspace_error(&outcome.l, &basis, k)?);
        let s = s_recovery_error(&outcome.s, &t.high_dim())?;
        r.s_error = Some(s.raw);
        r.s_error_normalized = Some(s.normalized);
        let f = support_f1(&outcome.feature_weight, &t.support_highd, DEFAULT_ZERO_TOL);
        r.f1 = Some(f.f1);
        r.precision = Some(f.precision);
        r.recall = Some(f.recall);
    }
    if let Some(c) = clusters {
        let emb = embedding(&outcome.l, k)?;
        if c <= emb.rows() {
            let mut rng = RngStream::new(seed, mix_stream_id(outcome.method.tag(), 0x5eed));
            let km = kmeans(&emb, c, KMEANS_RESTARTS, &mut rng)?;
            r.silhouette = Some(silhouette(&emb, &km.labels)?);
        }
    }
    if let Some(m) = &outcome.model {
        r.aic = Some(aic_score(x, m)?);
    }
    r.validate()?;
    Ok(r)
}

/// Sample coordinates `U_k Σ_k` of the low-rank estimate.
pub fn embedding(l: &Matrix, k: usize) -> Result<Matrix, CliError> {
    let f = svd(l)?.truncated(k);
    Ok(f.u.column_scale(&f.singular_values)?)
}

/// Per-method entry of a fit report.
#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    #[serde(flatten)]
    pub metrics: FitReport,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub aic_cells: Vec<hsl_core::eval::AicCell>,
}

impl MethodReport {
    pub fn new(metrics: FitReport, outcome: &MethodOutcome) -> Self {
        Self {
            metrics,
            lambda: outcome.lambda,
            gamma: outcome.gamma,
            notes: outcome.notes.clone(),
            aic_cells: outcome.aic_cells.clone(),
        }
    }
}

/// Top-level JSON document written by `fit` and `compare`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub data: String,
    pub shape: (usize, usize),
    pub k: usize,
    pub ground_truth: bool,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodReport>,
    pub omitted_methods: BTreeMap<&'static str, &'static str>,
}

impl RunReport {
    pub fn new(
        command: &str,
        data: String,
        x: &Matrix,
        k: usize,
        truth: bool,
        config: &ExperimentConfig,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            data,
            shape: x.shape(),
            k,
            ground_truth: truth,
            config: config.clone(),
            methods: Vec::new(),
            omitted_methods: OMITTED_METHODS.into_iter().collect(),
        }
    }
}
