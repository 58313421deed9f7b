//! Command-line grammar and its merge into [`ExperimentConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{BaselineTuning, ExperimentConfig, ExperimentKind, Method, Selection};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "hsl",
    version,
    about = "Hybrid subspace learning and baseline decompositions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic data set and write it with its ground truth.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// File stem of the generated CSV.
        #[arg(long, default_value = "data")]
        name: String,
    },
    /// Fit one method (HSL by default) to a CSV or a synthetic draw.
    Fit(DataArgs),
    /// Fit every method on the same data and report side by side.
    Compare(DataArgs),
    /// Singular value profile of a CSV or a synthetic draw.
    Spectrum(DataArgs),
    /// Run a repeated-trial experiment over a parameter grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        experiment: Option<ExperimentKind>,
        /// Values of the swept parameter, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV (no path: draw synthetic data).
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Flags shared by every command. Each overrides the config file when given.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Latent dimension (also the generating rank for synthetic data).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Role probabilities low-rank,high-dim,both, e.g. 0.9,0.1,0.
    #[arg(long, value_parser = parse_theta)]
    pub theta: Option<[f64; 3]>,
    /// Exact number of high-dimensional features.
    #[arg(long)]
    pub high_dim_count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed exclusivity weight (cold start) instead of the warm-start path.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Warm-start increment.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum)]
    pub select: Option<Selection>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[arg(long, value_enum)]
    pub baseline_tuning: Option<BaselineTuning>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Input CSV has a header line.
    #[arg(long)]
    pub header: bool,
    /// Exit with status 3 when any fit stops at its iteration cap.
    #[arg(long)]
    pub strict: bool,
    /// Report the silhouette of this many k-means clusters of the embedding.
    #[arg(long)]
    pub clusters: Option<usize>,
}

fn parse_theta(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let mut t = [0.0; 3];
    for (slot, part) in t.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("{part:?} is not a number"))?;
    }
    Ok(t)
}

impl CommonArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(c.synth.n, self.n);
        set!(c.synth.p, self.p);
        set!(c.synth.k, self.k);
        set!(c.synth.sigma2, self.sigma2);
        set!(c.synth.theta, self.theta);
        set!(c.seed, self.seed);
        set!(c.hsl.lambda, self.lambda);
        set!(c.hsl.selection, self.select);
        set!(c.baseline_tuning, self.baseline_tuning);
        set!(c.trials, self.trials);
        set!(c.out, self.out.clone());
        set!(c.jobs, self.jobs);
        if self.high_dim_count.is_some() {
            c.synth.high_dim_count = self.high_dim_count;
        }
        if self.gamma.is_some() {
            c.hsl.gamma = self.gamma;
        }
        if self.eta.is_some() {
            c.hsl.eta = self.eta;
        }
        if self.clusters.is_some() {
            c.clusters = self.clusters;
        }
        if !self.lambda_grid.is_empty() {
            c.hsl.lambda_grid = self.lambda_grid.clone();
        }
        if !self.method.is_empty() {
            c.methods = self.method.clone();
        }
        c.header |= self.header;
        c.strict |= self.strict;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_parser() {
        assert_eq!(parse_theta("0.9, 0.1,0").unwrap(), [0.9, 0.1, 0.0]);
        assert!(parse_theta("1,0").is_err());
        assert!(parse_theta("a,b,c").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "hsl",
            "fit",
            "--k",
            "4",
            "--method",
            "pca,op",
            "--theta",
            "0.5,0.5,0",
            "--strict",
        ])
        .unwrap();
        let Command::Fit(a) = cli.command else {
            panic!()
        };
        let c = a.common.resolve().unwrap();
        assert_eq!(c.synth.k, 4);
        assert_eq!(c.methods, vec![Method::Pca, Method::Op]);
        assert_eq!(c.synth.theta, [0.5, 0.5, 0.0]);
        assert!(c.strict);
        assert_eq!(c.synth.n, ExperimentConfig::default().synth.n);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "trials = 4\nseed = 9\n[synth]\nk = 7\n").unwrap();
        let args = CommonArgs {
            config: Some(path),
            k: Some(3),
            ..CommonArgs::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!((c.trials, c.seed, c.synth.k), (4, 9, 3));
    }
}
