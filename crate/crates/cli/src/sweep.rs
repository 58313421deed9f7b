//! Experiment grids, parallel trial execution and aggregation.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use hsl_core::eval::{spectrum_profile, subspace_error, support_f1, DEFAULT_ZERO_TOL};
use hsl_core::hsl::{fit, fit_cold_start, fit_warm_start_path};
use hsl_core::rng::mix_stream_id;
use hsl_core::synth::{generate_categorical, generate_hybrid, SynthInstance};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, Method, SynthSettings, OMITTED_METHODS};
use crate::error::CliError;
use crate::io::{create_dir, csv_io, write_json, SCHEMA_VERSION};
use crate::methods::run_method;
use crate::report::evaluate;

/// Subspace error at or below this, with a perfect F1, counts as exact recovery.
pub const EXACT_RECOVERY_TOL: f64 = 1e-3;

/// Methods run by sweeps when none are configured.
pub const DEFAULT_SWEEP_METHODS: [Method; 4] = Method::ALL;

#[derive(Debug, Clone)]
enum CellParams {
    Synth(SynthSettings),
    GammaFraction(f64),
    Theta([f64; 3]),
}

/// One grid point; `key` holds its column values in output order.
#[derive(Debug, Clone)]
pub struct Cell {
    pub key: Vec<(String, String)>,
    params: CellParams,
}

/// Outcome of one (cell, trial, method-or-mode).
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    pub label: String,
    pub metrics: Vec<(&'static str, f64)>,
    pub converged: bool,
    pub success: Option<bool>,
    pub series: Vec<f64>,
    pub wall_time: f64,
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Grid cells of `cfg.experiment`, in ascending key order.
pub fn build_cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>, CliError> {
    let base = cfg.synth.clone();
    let kind = cfg.experiment;
    let mut values = cfg.grid.values_or_default(kind);
    values.sort_by(f64::total_cmp);
    values.dedup();
    let synth = |s: SynthSettings, key: Vec<(String, String)>| Cell {
        key,
        params: CellParams::Synth(s),
    };
    let cells = match kind {
        ExperimentKind::Fit => vec![synth(base, Vec::new())],
        ExperimentKind::SweepNoise => values
            .iter()
            .map(|&v| {
                synth(
                    SynthSettings {
                        sigma2: v,
                        ..base.clone()
                    },
                    vec![("sigma2".into(), num(v))],
                )
            })
            .collect(),
        ExperimentKind::SweepK => values
            .iter()
            .map(|&v| {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(CliError::Usage(format!(
                        "k grid value {v} is not a positive integer"
                    )));
                }
                Ok(synth(
                    SynthSettings {
                        k: v as usize,
                        ..base.clone()
                    },
                    vec![("k".into(), num(v))],
                ))
            })
            .collect::<Result<_, _>>()?,
        ExperimentKind::SweepTheta => values
            .iter()
            .map(|&v| {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CliError::Usage(format!(
                        "theta_2 grid value {v} outside [0, 1]"
                    )));
                }
                let theta = [1.0 - v, v, 0.0];
                Ok(synth(
                    SynthSettings {
                        theta,
                        ..base.clone()
                    },
                    vec![("theta2".into(), num(v))],
                ))
            })
            .collect::<Result<_, _>>()?,
        ExperimentKind::PhaseTransition => {
            let (ks, ss) = cfg.grid.phase_axes();
            let mut cells = Vec::new();
            for &k in &ks {
                for &s in &ss {
                    let settings = SynthSettings {
                        k,
                        sigma2: 0.0,
                        high_dim_count: Some(s),
                        ..base.clone()
                    };
                    cells.push(synth(
                        settings,
                        vec![("k".into(), k.to_string()), ("s".into(), s.to_string())],
                    ));
                }
            }
            cells
        }
        ExperimentKind::WarmstartCompare => {
            let mut f = cfg.grid.gamma_fractions_or_default();
            f.sort_by(f64::total_cmp);
            f.dedup();
            f.into_iter()
                .map(|v| Cell {
                    key: vec![("gamma_fraction".into(), num(v))],
                    params: CellParams::GammaFraction(v),
                })
                .collect()
        }
        ExperimentKind::Spectrum => cfg
            .grid
            .thetas_or_default()
            .into_iter()
            .map(|t| Cell {
                key: vec![("theta".into(), format!("{}/{}/{}", t[0], t[1], t[2]))],
                params: CellParams::Theta(t),
            })
            .collect(),
    };
    for c in &cells {
        if let CellParams::Synth(s) = &c.params {
            s.spec(cfg.seed)
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    Ok(cells)
}

/// Seed of the data drawn for trial `t`; shared by every method and cell.
pub fn data_seed(master: u64, trial: usize) -> u64 {
    mix_stream_id(master, trial as u64)
}

/// Seed of the random initialization of `method` in trial `t`.
pub fn method_seed(master: u64, trial: usize, method: Method) -> u64 {
    mix_stream_id(master, mix_stream_id(trial as u64, method.tag()))
}

pub fn generate(settings: &SynthSettings, seed: u64) -> Result<SynthInstance<f64>, CliError> {
    let spec = settings.spec(seed);
    if spec.theta[2] == 0.0 {
        Ok(generate_categorical(&spec)?)
    } else {
        Ok(generate_hybrid(&spec)?)
    }
}

fn method_records(
    cfg: &ExperimentConfig,
    methods: &[Method],
    cell: usize,
    settings: &SynthSettings,
    trial: usize,
) -> Result<Vec<TrialRecord>, CliError> {
    let inst = generate(settings, data_seed(cfg.seed, trial))?;
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let seed = method_seed(cfg.seed, trial, m);
        let start = Instant::now();
        let outcome = run_method(m, &inst.x, settings.k, cfg, seed, Some(&inst))?;
        let wall = start.elapsed().as_secs_f64();
        let r = evaluate(
            &inst.x,
            settings.k,
            &outcome,
            Some(&inst),
            cfg.clusters,
            seed,
            wall,
        )?;
        let se = r.subspace_error.unwrap_or(f64::NAN);
        let f1 = r.f1.unwrap_or(f64::NAN);
        let mut metrics = vec![
            ("subspace_error", se),
            ("s_error", r.s_error.unwrap_or(f64::NAN)),
            (
                "s_error_normalized",
                r.s_error_normalized.unwrap_or(f64::NAN),
            ),
            ("f1", f1),
            ("precision", r.precision.unwrap_or(f64::NAN)),
            ("recall", r.recall.unwrap_or(f64::NAN)),
            ("reconstruction_error", r.reconstruction_error),
            ("iterations", r.iterations as f64),
        ];
        if let Some(s) = r.silhouette {
            metrics.push(("silhouette", s));
        }
        let success = (cfg.experiment == ExperimentKind::PhaseTransition)
            .then_some(se <= EXACT_RECOVERY_TOL && f1 == 1.0);
        out.push(TrialRecord {
            cell,
            trial,
            label: m.name().to_string(),
            metrics,
            converged: r.converged,
            success,
            series: Vec::new(),
            wall_time: wall,
        });
    }
    Ok(out)
}

/// Warm-started path against cold starts at fractions of `γ_max`.
fn warmstart_records(
    cfg: &ExperimentConfig,
    cells: &[Cell],
    trial: usize,
) -> Result<Vec<TrialRecord>, CliError> {
    let inst = generate(&cfg.synth, data_seed(cfg.seed, trial))?;
    let k = cfg.synth.k;
    let lambda = cfg.hsl.lambda;
    let seed = method_seed(cfg.seed, trial, Method::Hsl);
    let solver = cfg.solver_config(k, seed);
    let start = Instant::now();
    let path = fit_warm_start_path(&inst.x, lambda, cfg.hsl.eta, &solver)?;
    let path_time = start.elapsed().as_secs_f64();
    let gamma_max = path.gamma_max();
    let basis = inst.true_row_basis()?;
    let mut out = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        let CellParams::GammaFraction(frac) = cell.params else {
            unreachable!("warm-start cells carry gamma fractions")
        };
        let gamma = frac * gamma_max;
        let mut run = |label: &str, warm: bool| -> Result<(), CliError> {
            let start = Instant::now();
            let model = if warm {
                let prev = path
                    .models
                    .iter()
                    .rev()
                    .find(|m| m.gamma_at_fit <= gamma)
                    .expect("path starts at gamma = 0")
                    .clone();
                let mut c = solver.clone();
                c.gamma = gamma;
                fit(&inst.x, &c, prev)?
            } else {
                fit_cold_start(
                    &inst.x,
                    lambda,
                    gamma,
                    &solver,
                    mix_stream_id(ci as u64, 0xc01d),
                )?
            };
            let wall = start.elapsed().as_secs_f64() + if warm { path_time } else { 0.0 };
            let objective = model.final_objective().unwrap_or(f64::NAN);
            let f1 = support_f1(&model.b, &inst.support_highd, DEFAULT_ZERO_TOL).f1;
            let se = subspace_error(&model.low_rank(), &basis, k)?;
            out.push(TrialRecord {
                cell: ci,
                trial,
                label: label.to_string(),
                metrics: vec![
                    ("gamma", gamma),
                    ("objective", objective),
                    ("f1", f1),
                    ("subspace_error", se),
                    ("overlap", model.overlap()),
                ],
                converged: model.converged,
                success: None,
                series: Vec::new(),
                wall_time: wall,
            });
            Ok(())
        };
        run("cold", false)?;
        run("warm", true)?;
    }
    Ok(out)
}

fn spectrum_record(
    cfg: &ExperimentConfig,
    cell: usize,
    theta: [f64; 3],
    trial: usize,
) -> Result<TrialRecord, CliError> {
    let start = Instant::now();
    let settings = SynthSettings {
        theta,
        ..cfg.synth.clone()
    };
    let inst = generate(&settings, data_seed(cfg.seed, trial))?;
    let sp = spectrum_profile(&inst.x, settings.k)?;
    Ok(TrialRecord {
        cell,
        trial,
        label: "spectrum".into(),
        metrics: vec![
            ("head_drop_ratio", sp.head_drop_ratio),
            ("head_kth_ratio", sp.head_kth_ratio),
            ("tail_half_ratio", sp.tail_half_ratio),
            ("last_ratio", sp.last_ratio),
            ("head_energy", sp.head_energy),
        ],
        converged: true,
        success: None,
        series: sp.singular_values,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Runs every trial of every cell on a pool of `cfg.jobs` threads. Records come
/// back in (cell, trial, label) order regardless of scheduling.
pub fn run_trials(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<TrialRecord>, CliError> {
    let methods = cfg.methods_or(&DEFAULT_SWEEP_METHODS);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    let results: Vec<Result<Vec<TrialRecord>, CliError>> = pool.install(|| {
        if cfg.experiment == ExperimentKind::WarmstartCompare {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| warmstart_records(cfg, cells, t))
                .collect()
        } else {
            let jobs: Vec<(usize, usize)> = (0..cells.len())
                .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
                .collect();
            jobs.into_par_iter()
                .map(|(c, t)| match &cells[c].params {
                    CellParams::Synth(s) => method_records(cfg, &methods, c, s, t),
                    CellParams::Theta(theta) => spectrum_record(cfg, c, *theta, t).map(|r| vec![r]),
                    CellParams::GammaFraction(_) => unreachable!("handled per trial"),
                })
                .collect()
        }
    });
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    records.sort_by(|a, b| (a.cell, &a.label, a.trial).cmp(&(b.cell, &b.label, b.trial)));
    Ok(records)
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregated row: one per (cell, label).
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub label: String,
    pub trials: usize,
    pub converged: usize,
    pub successes: Option<usize>,
    pub metrics: Vec<(String, f64, f64)>,
    pub wall_time: (f64, f64),
}

pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, String), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.cell, r.label.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((cell, label), rs)| {
            let names: Vec<&'static str> = rs[0].metrics.iter().map(|(n, _)| *n).collect();
            let metrics = names
                .iter()
                .map(|name| {
                    let vals: Vec<f64> = rs
                        .iter()
                        .filter_map(|r| r.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v))
                        .collect();
                    let (m, se) = mean_se(&vals);
                    (name.to_string(), m, se)
                })
                .collect();
            let times: Vec<f64> = rs.iter().map(|r| r.wall_time).collect();
            SummaryRow {
                cell,
                label,
                trials: rs.len(),
                converged: rs.iter().filter(|r| r.converged).count(),
                successes: rs[0]
                    .success
                    .map(|_| rs.iter().filter(|r| r.success == Some(true)).count()),
                metrics,
                wall_time: mean_se(&times),
            }
        })
        .collect()
}

fn key_header(cells: &[Cell]) -> Vec<String> {
    cells
        .first()
        .map(|c| c.key.iter().map(|(k, _)| k.clone()).collect())
        .unwrap_or_default()
}

fn write_results(path: &Path, cells: &[Cell], rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = key_header(cells);
    header.extend(["method".into(), "trials".into(), "converged".into()]);
    let with_success = rows.iter().any(|r| r.successes.is_some());
    if with_success {
        header.push("successes".into());
    }
    if let Some(first) = rows.first() {
        for (name, _, _) in &first.metrics {
            header.push(format!("{name}_mean"));
            header.push(format!("{name}_se"));
        }
    }
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for r in rows {
        let mut rec: Vec<String> = cells[r.cell].key.iter().map(|(_, v)| v.clone()).collect();
        rec.extend([
            r.label.clone(),
            r.trials.to_string(),
            r.converged.to_string(),
        ]);
        if with_success {
            rec.push(r.successes.unwrap_or(0).to_string());
        }
        for (_, m, se) in &r.metrics {
            rec.push(num(*m));
            rec.push(num(*se));
        }
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_timing(path: &Path, cells: &[Cell], rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = key_header(cells);
    header.extend([
        "method".into(),
        "wall_time_mean".into(),
        "wall_time_se".into(),
    ]);
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for r in rows {
        let mut rec: Vec<String> = cells[r.cell].key.iter().map(|(_, v)| v.clone()).collect();
        rec.extend([r.label.clone(), num(r.wall_time.0), num(r.wall_time.1)]);
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_trials(path: &Path, cells: &[Cell], records: &[TrialRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = key_header(cells);
    header.extend(["method".into(), "trial".into(), "converged".into()]);
    if let Some(first) = records.first() {
        header.extend(first.metrics.iter().map(|(n, _)| n.to_string()));
    }
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for r in records {
        let mut rec: Vec<String> = cells[r.cell].key.iter().map(|(_, v)| v.clone()).collect();
        rec.extend([
            r.label.clone(),
            r.trial.to_string(),
            r.converged.to_string(),
        ]);
        rec.extend(r.metrics.iter().map(|(_, v)| num(*v)));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Mean singular value spectrum per cell: `index,mean,se`.
fn write_spectra(
    dir: &Path,
    records: &[TrialRecord],
    cells: &[Cell],
) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    for (ci, _) in cells.iter().enumerate() {
        let series: Vec<&Vec<f64>> = records
            .iter()
            .filter(|r| r.cell == ci)
            .map(|r| &r.series)
            .collect();
        let Some(len) = series.iter().map(|s| s.len()).min() else {
            continue;
        };
        let name = format!("spectrum_{ci}.csv");
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        w.write_record(["index", "singular_value_mean", "singular_value_se"])
            .map_err(|e| csv_io(&path, e))?;
        for i in 0..len {
            let vals: Vec<f64> = series.iter().map(|s| s[i]).collect();
            let (m, se) = mean_se(&vals);
            w.write_record([(i + 1).to_string(), num(m), num(se)])
                .map_err(|e| csv_io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        files.push(name);
    }
    Ok(files)
}

#[derive(Debug, Serialize)]
struct SweepManifest<'a> {
    schema_version: u32,
    command: &'static str,
    experiment: &'static str,
    cells: Vec<BTreeMap<String, String>>,
    files: Vec<String>,
    rows: usize,
    omitted_methods: BTreeMap<&'static str, &'static str>,
    config: &'a ExperimentConfig,
}

/// Summary of a finished sweep.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    pub cells: Vec<Cell>,
    pub unconverged: usize,
}

/// Runs the configured experiment and writes `results.csv`, `trials.csv`,
/// `timing.csv` and `sweep.json` (plus per-cell spectra) into `cfg.out`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome, CliError> {
    cfg.validate()?;
    if cfg.data.is_some() {
        return Err(CliError::Usage(
            "sweeps generate their own data; drop the data path".into(),
        ));
    }
    let cells = build_cells(cfg)?;
    info!(
        "{}: {} cells x {} trials on {} threads",
        cfg.experiment.name(),
        cells.len(),
        cfg.trials,
        cfg.jobs
    );
    let records = run_trials(cfg, &cells)?;
    let rows = summarize(&records);
    create_dir(&cfg.out)?;
    write_results(&cfg.out.join("results.csv"), &cells, &rows)?;
    write_trials(&cfg.out.join("trials.csv"), &cells, &records)?;
    write_timing(&cfg.out.join("timing.csv"), &cells, &rows)?;
    let mut files = vec![
        "results.csv".to_string(),
        "trials.csv".into(),
        "timing.csv".into(),
    ];
    if cfg.experiment == ExperimentKind::Spectrum {
        files.extend(write_spectra(&cfg.out, &records, &cells)?);
    }
    let manifest = SweepManifest {
        schema_version: SCHEMA_VERSION,
        command: "sweep",
        experiment: cfg.experiment.name(),
        cells: cells
            .iter()
            .map(|c| c.key.iter().cloned().collect())
            .collect(),
        files,
        rows: rows.len(),
        omitted_methods: OMITTED_METHODS.into_iter().collect(),
        config: cfg,
    };
    write_json(&cfg.out.join("sweep.json"), &manifest)?;
    let unconverged = records.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        warn!("{unconverged} fits stopped at their iteration cap");
    }
    Ok(SweepOutcome {
        rows,
        cells,
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample sd = √(5/3), se = sd / 2
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mean_se(&[7.0]), (7.0, 0.0));
        assert!(mean_se(&[]).0.is_nan());
    }

    #[test]
    fn cells_are_sorted_and_deduplicated() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment = ExperimentKind::SweepNoise;
        cfg.grid.values = vec![1.0, 0.1, 1.0, 0.5];
        let cells = build_cells(&cfg).unwrap();
        let keys: Vec<&str> = cells.iter().map(|c| c.key[0].1.as_str()).collect();
        assert_eq!(keys, ["0.1", "0.5", "1"]);
    }

    #[test]
    fn phase_cells_are_noise_free() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment = ExperimentKind::PhaseTransition;
        cfg.grid.phase_k = vec![2];
        cfg.grid.phase_s = vec![3, 4];
        let cells = build_cells(&cfg).unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            let CellParams::Synth(s) = &c.params else {
                panic!()
            };
            assert_eq!(s.sigma2, 0.0);
        }
    }

    #[test]
    fn bad_k_grid_is_a_usage_error() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment = ExperimentKind::SweepK;
        cfg.grid.values = vec![2.5];
        assert!(matches!(build_cells(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn seeds_pair_methods_on_shared_data() {
        assert_eq!(data_seed(5, 2), data_seed(5, 2));
        assert_ne!(data_seed(5, 2), data_seed(5, 3));
        assert_ne!(
            method_seed(5, 2, Method::Hsl),
            method_seed(5, 2, Method::Op)
        );
    }
}
