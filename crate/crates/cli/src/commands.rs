//! Command implementations.

use std::path::Path;
use std::time::Instant;

use hsl_core::eval::spectrum_profile;
use hsl_core::synth::SynthInstance;
use hsl_core::Matrix;
use log::{info, warn};
use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::error::CliError;
use crate::io::{
    create_dir, load_dataset, sidecar_path, write_json, write_matrix_csv, TruthSidecar,
    SCHEMA_VERSION,
};
use crate::methods::{run_method, MethodOutcome};
use crate::report::{evaluate, MethodReport, RunReport};
use crate::sweep::{data_seed, generate, method_seed, run_sweep};

/// Writes `out/name.csv` and `out/name.truth.json`.
pub fn generate_cmd(cfg: &ExperimentConfig, name: &str) -> Result<(), CliError> {
    cfg.validate()?;
    let inst = generate(&cfg.synth, cfg.seed)?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join(format!("{name}.csv"));
    write_matrix_csv(&path, &inst.x)?;
    write_json(&sidecar_path(&path), &TruthSidecar::from_instance(&inst))?;
    info!(
        "wrote {} ({}x{})",
        path.display(),
        inst.x.rows(),
        inst.x.cols()
    );
    Ok(())
}

/// Input data: the configured CSV, or the trial-0 synthetic draw a sweep would use.
fn load(cfg: &ExperimentConfig) -> Result<(Matrix, Option<SynthInstance<f64>>, String), CliError> {
    match &cfg.data {
        Some(path) => {
            let (x, truth) = load_dataset(path, cfg.header)?;
            Ok((x, truth, path.display().to_string()))
        }
        None => {
            let inst = generate(&cfg.synth, data_seed(cfg.seed, 0))?;
            Ok((inst.x.clone(), Some(inst), "synthetic".into()))
        }
    }
}

fn write_factors(dir: &Path, o: &MethodOutcome) -> Result<(), CliError> {
    let prefix = o.method.name();
    if let Some(m) = &o.model {
        write_matrix_csv(&dir.join(format!("{prefix}_z.csv")), &m.z)?;
        write_matrix_csv(&dir.join(format!("{prefix}_a.csv")), &m.a)?;
        write_matrix_csv(&dir.join(format!("{prefix}_w.csv")), &m.w)?;
        write_matrix_csv(
            &dir.join(format!("{prefix}_b.csv")),
            &Matrix::from_vec(1, m.b.len(), m.b.clone())?,
        )?;
    }
    write_matrix_csv(&dir.join(format!("{prefix}_low_rank.csv")), &o.l)?;
    write_matrix_csv(&dir.join(format!("{prefix}_high_dim.csv")), &o.s)
}

/// Fits `methods` on the same data and writes `report.json` plus estimates.
pub fn fit_cmd(
    cfg: &ExperimentConfig,
    command: &str,
    default_methods: &[Method],
) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let (x, truth, label) = load(cfg)?;
    let k = cfg.synth.k;
    let methods = cfg.methods_or(default_methods);
    let mut report = RunReport::new(command, label, &x, k, truth.is_some(), cfg);
    create_dir(&cfg.out)?;
    let mut unconverged = Vec::new();
    for m in methods {
        let seed = method_seed(cfg.seed, 0, m);
        let start = Instant::now();
        let outcome = run_method(m, &x, k, cfg, seed, truth.as_ref())?;
        let wall = start.elapsed().as_secs_f64();
        let metrics = evaluate(&x, k, &outcome, truth.as_ref(), cfg.clusters, seed, wall)?;
        info!(
            "{}: reconstruction error {:e}",
            m.name(),
            metrics.reconstruction_error
        );
        for note in &outcome.notes {
            warn!("{}: {note}", m.name());
        }
        if !outcome.converged {
            unconverged.push(m.name());
        }
        write_factors(&cfg.out, &outcome)?;
        report.methods.push(MethodReport::new(metrics, &outcome));
    }
    write_json(&cfg.out.join("report.json"), &report)?;
    if cfg.strict && !unconverged.is_empty() {
        return Err(CliError::NonConvergence(format!(
            "hit the iteration cap: {}",
            unconverged.join(", ")
        )));
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct SpectrumReport {
    schema_version: u32,
    command: &'static str,
    data: String,
    shape: (usize, usize),
    k: usize,
    #[serde(flatten)]
    profile: hsl_core::eval::SpectrumProfile,
}

pub fn spectrum_cmd(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let (x, _, label) = load(cfg)?;
    let k = cfg.synth.k;
    let profile = spectrum_profile(&x, k)?;
    create_dir(&cfg.out)?;
    write_json(
        &cfg.out.join("spectrum.json"),
        &SpectrumReport {
            schema_version: SCHEMA_VERSION,
            command: "spectrum",
            data: label,
            shape: x.shape(),
            k,
            profile,
        },
    )
}

pub fn sweep_cmd(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let outcome = run_sweep(cfg)?;
    info!(
        "wrote {} summary rows to {}",
        outcome.rows.len(),
        cfg.out.display()
    );
    if cfg.strict && outcome.unconverged > 0 {
        return Err(CliError::NonConvergence(format!(
            "{} fits hit the iteration cap",
            outcome.unconverged
        )));
    }
    Ok(())
}
