//! Batch front end: JSON configs in, CSV and JSON files out.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use config::RunConfig;

/// Exit status 2 for configuration problems, 1 for numerical failures.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("validation failed for criteria {0:?}")]
    Validation(Vec<u8>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) | Self::Io(_) | Self::Validation(_) => 1,
        }
    }
}

impl From<wiener_core::Error> for CliError {
    fn from(e: wiener_core::Error) -> Self {
        use wiener_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::UnsupportedKernel(_) => Self::Config(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "wiener-project",
    version,
    about = "Deterministic-shift projections of drifted Wiener measures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Itô kernel of an integral/terminal cost, with its Monte-Carlo residual.
    Kernel(RunArgs),
    /// Shooting solve of the Euler-Lagrange problem.
    Solve(RunArgs),
    /// Monte-Carlo minimization of the path-space objective.
    Om(RunArgs),
    /// State-independence penalty of a drift.
    Penalty(RunArgs),
    /// Euler simulation of the projected process.
    Simulate(RunArgs),
    /// Runs the reference battery.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, overriding `outputs.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Ensemble seed, overriding `ensemble.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cross-check the free endpoint by scanning fixed terminal values.
    #[arg(long)]
    pub scan_a: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Directory for `validation.json`.
    #[arg(long, default_value = "validation")]
    pub out: PathBuf,
    /// Run only these criteria.
    #[arg(long, value_delimiter = ',', hide = true)]
    pub only: Vec<u8>,
    /// Test hook: make one criterion's tolerances unattainable.
    #[arg(long, hide = true, value_name = "ID")]
    pub corrupt_tolerance: Option<u8>,
}
