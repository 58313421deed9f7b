//! Command-line front end and experiment harness for hybrid subspace learning.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod methods;
pub mod report;
pub mod sweep;

pub use args::{Cli, Command};
pub use error::CliError;

use config::Method;

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, name } => commands::generate_cmd(&common.resolve()?, &name),
        Command::Fit(a) => {
            let mut cfg = a.common.resolve()?;
            cfg.data = a.data.or(cfg.data);
            commands::fit_cmd(&cfg, "fit", &[Method::Hsl]).map(|_| ())
        }
        Command::Compare(a) => {
            let mut cfg = a.common.resolve()?;
            cfg.data = a.data.or(cfg.data);
            commands::fit_cmd(&cfg, "compare", &Method::ALL).map(|_| ())
        }
        Command::Spectrum(a) => {
            let mut cfg = a.common.resolve()?;
            cfg.data = a.data.or(cfg.data);
            commands::spectrum_cmd(&cfg)
        }
        Command::Sweep {
            common,
            experiment,
            grid,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(e) = experiment {
                cfg.experiment = e;
            }
            if !grid.is_empty() {
                cfg.grid.values = grid;
            }
            commands::sweep_cmd(&cfg)
        }
    }
}
