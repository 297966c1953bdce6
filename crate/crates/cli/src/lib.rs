//! Batch front end for the `skewmem` engine.
//!
//! Every run reads one TOML config, applies command-line overrides, writes its
//! artifacts into the output directory and finishes with `manifest.json`.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 parse, validation or hypothesis
//! failure, 3 a statistical or numerical check failed.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{Config, Overrides};
pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_TEST_FAILURE: i32 = 3;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "SKEWMEM_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Parse(_) | CliError::Validation(_) | CliError::Hypothesis(_) => EXIT_VALIDATION,
        }
    }
}

impl From<skewmem::Error> for CliError {
    fn from(e: skewmem::Error) -> Self {
        use skewmem::Error as E;
        match e {
            E::Usage(m) => CliError::Usage(m),
            E::Io(m) => CliError::Io(std::io::Error::other(m)),
            E::Hypothesis(m) => CliError::Hypothesis(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "skewmem", version, about = "Skew Brownian motion with spherical membranes: simulate, verify, analyze")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectories and local times.
    Simulate(Common),
    /// Run statistical tests and emit reports.
    Verify {
        #[command(flatten)]
        common: Common,
        /// crossing, crossing_negative, radial, radial_negative, reversibility, occupation or all.
        #[arg(long = "test", default_value = "crossing")]
        test: String,
        /// Membrane radius for the crossing tests.
        #[arg(long)]
        membrane: Option<f64>,
    },
    /// Quadrature checks: integration by parts, trace inequality, volume growth.
    Analyze(Common),
    /// Write the skew coefficient table.
    Coeffs(Common),
    /// Check the weight hypotheses only.
    Validate(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Bin,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "skewmem-out")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paths: self.paths,
            step: self.step,
            horizon: self.horizon,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
/// Diagnostics go to stderr, summaries to stdout.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(&cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("skewmem: {e}");
            e.exit_code()
        }
    }
}
