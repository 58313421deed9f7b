//! Experiment configuration: defaults, TOML files and flag overrides.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use hsl_core::synth::{Membership, SynthSpec};
use hsl_core::Config;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hsl,
    Pca,
    Rpca,
    Op,
}

/// Comparison methods without an implementation, with the reason reported in
/// every output document.
pub const OMITTED_METHODS: [(&str, &str); 1] = [("sparse-pca", "not implemented")];

impl Method {
    pub const ALL: [Method; 4] = [Method::Hsl, Method::Pca, Method::Rpca, Method::Op];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hsl => "hsl",
            Method::Pca => "pca",
            Method::Rpca => "rpca",
            Method::Op => "op",
        }
    }

    /// Stable tag mixed into per-method random streams.
    pub fn tag(self) -> u64 {
        match self {
            Method::Hsl => 1,
            Method::Pca => 2,
            Method::Rpca => 3,
            Method::Op => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Fit,
    SweepNoise,
    SweepK,
    SweepTheta,
    PhaseTransition,
    WarmstartCompare,
    Spectrum,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fit => "fit",
            ExperimentKind::SweepNoise => "sweep-noise",
            ExperimentKind::SweepK => "sweep-k",
            ExperimentKind::SweepTheta => "sweep-theta",
            ExperimentKind::PhaseTransition => "phase-transition",
            ExperimentKind::WarmstartCompare => "warmstart-compare",
            ExperimentKind::Spectrum => "spectrum",
        }
    }
}

/// How the HSL penalty weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Use `lambda` as given; `gamma` as given or the end of the warm-start path.
    #[default]
    Fixed,
    /// Minimize AIC over `lambda_grid` and the warm-start path of each.
    Aic,
}

/// How baseline penalty weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineTuning {
    /// RPCA at `1/√n`, outlier pursuit bisected to rank `k`.
    #[default]
    Protocol,
    /// Best subspace recovery over a weight grid; needs ground truth.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub sigma2: f64,
    pub theta: [f64; 3],
    /// Fix the number of high-dimensional features instead of drawing roles from `theta`.
    pub high_dim_count: Option<usize>,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let d = SynthSpec::default_benchmark(0);
        Self {
            n: d.n,
            p: d.p,
            k: d.k,
            sigma2: d.sigma2,
            theta: d.theta,
            high_dim_count: None,
        }
    }
}

impl SynthSettings {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            n: self.n,
            p: self.p,
            k: self.k,
            sigma2: self.sigma2,
            theta: self.theta,
            seed,
            membership: match self.high_dim_count {
                Some(s) => Membership::FixedHighDim(s),
                None => Membership::Categorical,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HslSettings {
    pub lambda: f64,
    /// Single cold-start fit at this weight instead of the warm-start path.
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub selection: Selection,
    pub lambda_grid: Vec<f64>,
    /// Solver controls; `k`, `lambda`, `gamma` and `seed` here are overridden.
    pub solver: Config,
}

impl Default for HslSettings {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            gamma: None,
            eta: None,
            selection: Selection::Fixed,
            lambda_grid: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            solver: Config::default(),
        }
    }
}

/// Sweep axes; empty lists fall back to per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSettings {
    /// Values of the swept parameter (`σ²`, `k` or `θ₂`).
    pub values: Vec<f64>,
    pub phase_k: Vec<usize>,
    pub phase_s: Vec<usize>,
    pub gamma_fractions: Vec<f64>,
    pub thetas: Vec<[f64; 3]>,
}

impl GridSettings {
    pub fn values_or_default(&self, kind: ExperimentKind) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        match kind {
            ExperimentKind::SweepNoise => vec![0.01, 0.1, 0.5, 1.0, 2.0],
            ExperimentKind::SweepK => vec![5.0, 10.0, 20.0, 30.0, 40.0],
            ExperimentKind::SweepTheta => vec![0.0, 0.05, 0.1, 0.2, 0.3],
            _ => Vec::new(),
        }
    }

    pub fn phase_axes(&self) -> (Vec<usize>, Vec<usize>) {
        let or = |v: &Vec<usize>, d: &[usize]| if v.is_empty() { d.to_vec() } else { v.clone() };
        (
            or(&self.phase_k, &[5, 10, 20, 30]),
            or(&self.phase_s, &[10, 20, 40, 60]),
        )
    }

    pub fn gamma_fractions_or_default(&self) -> Vec<f64> {
        if self.gamma_fractions.is_empty() {
            vec![0.1, 0.25, 0.5, 0.75, 1.0]
        } else {
            self.gamma_fractions.clone()
        }
    }

    pub fn thetas_or_default(&self) -> Vec<[f64; 3]> {
        if self.thetas.is_empty() {
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.0]]
        } else {
            self.thetas.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Input CSV; synthetic data is generated when absent.
    pub data: Option<PathBuf>,
    /// Skip one header line when reading `data`.
    pub header: bool,
    pub synth: SynthSettings,
    pub hsl: HslSettings,
    pub grid: GridSettings,
    /// Methods to run; each command has its own default when empty.
    pub methods: Vec<Method>,
    pub baseline_tuning: BaselineTuning,
    pub rpca_lambda: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub strict: bool,
    /// Cluster count for silhouette scoring of the low-rank embedding.
    pub clusters: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Fit,
            data: None,
            header: false,
            synth: SynthSettings::default(),
            hsl: HslSettings::default(),
            grid: GridSettings::default(),
            methods: Vec::new(),
            baseline_tuning: BaselineTuning::Protocol,
            rpca_lambda: None,
            trials: 10,
            seed: 0,
            out: PathBuf::from("hsl-out"),
            jobs: 1,
            strict: false,
            clusters: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn methods_or(&self, default: &[Method]) -> Vec<Method> {
        let mut m = if self.methods.is_empty() {
            default.to_vec()
        } else {
            self.methods.clone()
        };
        m.sort();
        m.dedup();
        m
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if self.trials == 0 {
            return usage("trials must be at least 1".into());
        }
        if self.jobs == 0 {
            return usage("jobs must be at least 1".into());
        }
        if let Some(path) = &self.data {
            if !path.exists() {
                return usage(format!("data file {} does not exist", path.display()));
            }
        } else {
            self.synth
                .spec(self.seed)
                .validate()
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if !(self.hsl.lambda >= 0.0) {
            return usage(format!(
                "lambda must be non-negative, got {}",
                self.hsl.lambda
            ));
        }
        if self.hsl.selection == Selection::Aic && self.hsl.lambda_grid.is_empty() {
            return usage("AIC selection needs a non-empty lambda grid".into());
        }
        if let Some(c) = self.clusters {
            if c < 2 {
                return usage("clusters must be at least 2".into());
            }
        }
        let mut solver = self.hsl.solver.clone();
        solver.k = self.synth.k;
        solver.lambda = self.hsl.lambda;
        solver.gamma = self.hsl.gamma.unwrap_or(0.0);
        solver.eta = self.hsl.eta;
        solver
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Solver configuration for one fit.
    pub fn solver_config(&self, k: usize, seed: u64) -> Config {
        let mut c = self.hsl.solver.clone();
        c.k = k;
        c.lambda = self.hsl.lambda;
        c.gamma = self.hsl.gamma.unwrap_or(0.0);
        c.eta = self.hsl.eta;
        c.seed = seed;
        c
    }
}
