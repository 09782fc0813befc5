//! Experiment runner behind the `abcsmc` binary: TOML configs in, posterior
//! samples, manifests and plot-ready CSV files out.

pub mod config;
pub mod error;
pub mod oracle;
pub mod plots;
pub mod run;

pub use config::{ExperimentConfig, MethodConfig};
pub use error::CliError;
pub use plots::{qq_data, QqPoint};
pub use run::{execute, prepare, run_experiment, RunOptions, RunSummary};
