//! `riskctl`: command-line front end for the risk-sensitive control solvers.
//!
//! Exit codes: 0 success, 1 I/O, 2 model validation, 3 solver or
//! diagnostic failure, 4 configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] riskctl_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("diagnostic failed: {0}")]
    Diagnostic(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(e) if e.is_solver() => 3,
            CliError::Core(riskctl_core::Error::Io(_)) => 1,
            CliError::Core(_) => 4,
            CliError::Diagnostic(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "riskctl",
    version,
    about = "Long-run risk-sensitive control of finite Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model file and report cost bounds.
    Validate(Opts),
    /// Solve the Bellman eigenproblem on the model or on ball `--n`.
    Solve(Opts),
    /// Solve balls `--n-from..=--n-to` and analyze the limit.
    Sweep(Opts),
    /// Monte-Carlo estimate of the growth rate under a stationary policy.
    Simulate(Opts),
    /// Write the harmonic cycle example and its closed forms.
    ExampleHarmonic(Opts),
    /// Heuristic check that exits from a reference ball are negligible.
    DiagnoseExass(Opts),
}

#[derive(Debug, clap::Args)]
struct Opts {
    /// JSON file with any of the flag values; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

impl Opts {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        Ok(base.merged(self.flags))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(o) => commands::validate(&o.resolve()?),
        Command::Solve(o) => commands::solve(&o.resolve()?),
        Command::Sweep(o) => commands::sweep(&o.resolve()?),
        Command::Simulate(o) => commands::simulate(&o.resolve()?),
        Command::ExampleHarmonic(o) => commands::example_harmonic(&o.resolve()?),
        Command::DiagnoseExass(o) => commands::diagnose_exass(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
