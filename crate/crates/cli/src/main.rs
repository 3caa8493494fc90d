use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spectral_huber::Error),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Parser, Debug)]
#[command(name = "spectral-huber", version, about = "Synthetic locally low-rank reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic problem archive in --output.
    Generate(Overrides),
    /// Reconstruct the archive in --problem and write results to --output.
    Reconstruct(Overrides),
    /// Merge reconstruction runs into one long-format CSV.
    Compare {
        /// Output directories of `reconstruct` runs.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// CSV file to write (stdout if absent).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// NRMSE of a reconstruction against the archive's ground truth.
    Metrics {
        #[arg(long)]
        problem: PathBuf,
        /// Reconstruction file written by `reconstruct`.
        #[arg(long)]
        recon: PathBuf,
        /// Optional limit point for the normalized distance.
        #[arg(long)]
        limit: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SPECTRAL_HUBER_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("SPECTRAL_HUBER_THREADS='{v}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Generate(o) => commands::generate(&o.resolve()?),
        Command::Reconstruct(o) => commands::reconstruct(&o.resolve()?),
        Command::Compare { runs, output } => commands::compare(&runs, output.as_deref()),
        Command::Metrics { problem, recon, limit } => commands::metrics(&problem, &recon, limit.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
