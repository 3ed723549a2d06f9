//! `phturnpike`: solve, simulate, certify, diagnose and sweep runs from a JSON config.
//!
//! Exit codes: 0 success, 1 configuration or I/O error (nothing written),
//! 2 a completed run that did not succeed (non-convergence, integration
//! failure, failed certificate).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::Overrides;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    fn run(e: impl std::fmt::Display) -> Self {
        CliError::Run(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Run(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "phturnpike", version, about = "Minimal-energy control and manifold turnpike diagnostics for port-Hamiltonian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Turnpike threshold; overrides `epsilon` from the config.
    #[arg(long, value_name = "REAL")]
    epsilon: Option<f64>,
    /// Certificate sampling seed; overrides `certify.seed` from the config.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the minimal-energy problem; writes trajectory.csv, summary.json, solver.log.
    Solve(Common),
    /// Integrate with the configured controls; writes trajectory.csv, summary.json.
    Simulate(Common),
    /// Sample the dissipation-map bound; writes certificate.json.
    Certify(Common),
    /// Energy, turnpike and dissipativity reports for a trajectory CSV; writes diagnostics.json.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV as written by `solve` or `simulate`.
        #[arg(long, value_name = "PATH")]
        trajectory: PathBuf,
    },
    /// Solve over several horizons at fixed step; writes sweep.csv, sweep.json.
    Sweep(Common),
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let common = match &cli.command {
        Command::Solve(c) | Command::Simulate(c) | Command::Certify(c) | Command::Sweep(c) => c,
        Command::Diagnose { common, .. } => common,
    };
    let overrides = Overrides { out: common.out.clone(), epsilon: common.epsilon, seed: common.seed };
    let resolved = config::load(&common.config, &overrides)?;
    let outcome = match &cli.command {
        Command::Solve(_) => commands::solve(&resolved)?,
        Command::Simulate(_) => commands::simulate(&resolved)?,
        Command::Certify(_) => commands::certify_cmd(&resolved)?,
        Command::Diagnose { trajectory, .. } => commands::diagnose_cmd(&resolved, trajectory)?,
        Command::Sweep(_) => commands::sweep(&resolved)?,
    };
    let dir = &resolved.config.output_dir;
    for path in outcome.artifacts.commit(dir)? {
        eprintln!("wrote {}", path.display());
    }
    eprintln!("{}", outcome.message);
    Ok(outcome.success)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("phturnpike: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
