//! `lienet` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 non-finite state during integration, 4 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lienet", version, about = "Coupled rigid-body and heavy-top network simulations")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "LIENET_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "lienet-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Integrate one trajectory and write it as CSV.
    Simulate,
    /// List the relative equilibria of the network.
    Equilibria,
    /// Equilibria with linear and energy-Casimir stability.
    Stability,
    /// Solve the mean-field self-consistency equation over a temperature grid.
    Meanfield,
    /// Run a temperature sweep.
    Sweep,
    /// Detect transitions in an existing sweep table.
    Detect {
        /// Sweep CSV to analyse (defaults to `<out-dir>/sweep.csv`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Column averaged over replicas and scanned for knees.
        #[arg(long, default_value = "magnitude")]
        column: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lib(#[from] lienet::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use lienet::Error as E;
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Lib(E::NonFiniteState { .. }) => 3,
            CliError::Lib(E::Numerical(_)) => 4,
            CliError::Lib(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lienet: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
