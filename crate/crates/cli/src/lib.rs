//! Command-line front end: `simulate`, `fit`, `summarize` and `diagnose`.
//!
//! Every command writes plain TSV/CSV files plus a `manifest.json` into an
//! output directory. Without `--out` the directory is placed under
//! `$CNVASSOC_OUTPUT_ROOT` (or the working directory).

pub mod diagnose;
pub mod fit;
pub mod output;
pub mod simulate;
pub mod summarize;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use cnvassoc_core::Error as CoreError;

pub const OUTPUT_ROOT_ENV: &str = "CNVASSOC_OUTPUT_ROOT";

/// Exit status for bad arguments or configuration.
pub const EXIT_USAGE: u8 = 1;
/// Exit status for numerical or other runtime failures.
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(CoreError::Config(_)) => EXIT_USAGE,
            CliError::Core(_) => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Joint copy-number calling and expression association by MCMC.
#[derive(Debug, Parser)]
#[command(name = "cnvassoc", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known associations.
    Simulate(simulate::SimulateArgs),
    /// Run the sampler and write posterior summaries.
    Fit(fit::FitArgs),
    /// Select associations at an FDR target and score them against the truth.
    Summarize(summarize::SummarizeArgs),
    /// Geweke and Heidelberger-Welch checks for every recorded scalar trace.
    Diagnose(diagnose::DiagnoseArgs),
}

/// Output location shared by every command.
#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory (default: `<output root>/<command>`).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

impl OutArgs {
    fn resolve(&self, command: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_ROOT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."))
                .join(command)
        })
    }
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| {
        CliError::Core(CoreError::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => simulate::run(&args),
        Command::Fit(args) => fit::run(&args),
        Command::Summarize(args) => summarize::run(&args),
        Command::Diagnose(args) => diagnose::run(&args),
    }
}
