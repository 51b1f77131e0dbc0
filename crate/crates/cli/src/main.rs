//! Experiment runner for the causal diffusion construction.
//!
//! Every subcommand is driven by a TOML config file, writes the fully
//! resolved configuration plus CSV/JSON artifacts into the output
//! directory, and exits 0 only when the experiment's acceptance predicate
//! holds. Errors produce a machine-readable JSON record on stderr and exit
//! code 2; a failed predicate exits 1.

mod commands;
mod config;

use causal_sde::analysis::AnalysisError;
use causal_sde::csvio::CsvError;
use causal_sde::measure::MeasureError;
use causal_sde::model::ModelError;
use causal_sde::paths::PathError;
use causal_sde::sde::SdeError;
use causal_sde::solver::SolverError;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("serialization error: {0}")]
    Serialize(String),
}

#[derive(Parser)]
#[command(
    name = "causal-sde",
    version,
    about = "Pathwise diffusion construction: solve, validate, and export experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override; recorded in the resolved config.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the summary line on stdout.
    #[arg(long)]
    quiet: bool,
}

type Runner = fn(&config::ResolvedConfig) -> Result<commands::Outcome, CliError>;

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed point on sampled Wiener drivers and export the paths.
    Simulate(Common),
    /// Strong-error refinement study against Euler-Maruyama on shared paths.
    Converge(Common),
    /// Monte-Carlo mean of the exponential change-of-measure weight.
    Girsanov(Common),
    /// Two-sample KS comparison of the state law at an observation time.
    Density(Common),
    /// Fixed point driven by exact-law fractional Brownian paths.
    Fbm(Common),
    /// Recover the latent driver from an observed state path.
    Identify(Common),
}

fn main() {
    let cli = Cli::parse();
    let (runner, common): (Runner, _) = match cli.command {
        Command::Simulate(c) => (commands::simulate, c),
        Command::Converge(c) => (commands::converge, c),
        Command::Girsanov(c) => (commands::girsanov, c),
        Command::Density(c) => (commands::density, c),
        Command::Fbm(c) => (commands::fbm, c),
        Command::Identify(c) => (commands::identify, c),
    };
    std::process::exit(run(runner, &common));
}

fn run(runner: Runner, common: &Common) -> i32 {
    match execute(runner, common) {
        Ok(outcome) => {
            if !common.quiet {
                println!("{}", outcome.summary);
                println!(
                    "result: {}",
                    if outcome.passed { "PASS" } else { "FAIL" }
                );
            }
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(error) => {
            let record = serde_json::json!({
                "schema_version": commands::SCHEMA_VERSION,
                "error": error.to_string(),
            });
            eprintln!("{record}");
            2
        }
    }
}

fn execute(runner: Runner, common: &Common) -> Result<commands::Outcome, CliError> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        CliError::Config(format!(
            "cannot read config '{}': {e}",
            common.config.display()
        ))
    })?;
    let raw = config::parse(&text)?;
    let resolved = config::resolve(
        raw,
        common.seed,
        common.out.as_ref().map(|p| p.display().to_string()),
    );
    runner(&resolved)
}
