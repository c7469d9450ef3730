//! `renewal`: batch driver for the periodic renewal toolkit.
//!
//! Exit codes: 0 success, 1 a `check` failed, 2 configuration or I/O error,
//! 3 a numerical routine did not converge or was inconsistent.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use renewal_core::RenewalError;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
    CheckFailed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<RenewalError> for CliError {
    fn from(e: RenewalError) -> Self {
        match e {
            RenewalError::Domain(_) | RenewalError::Construction(_) | RenewalError::Configuration(_) => {
                CliError::Config(e.to_string())
            }
            RenewalError::Convergence { .. }
            | RenewalError::Inconsistency(_)
            | RenewalError::Unreliable(_)
            | RenewalError::ProposalCap { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "renewal", version, about = "Renewal processes with a periodic hazard")]
struct Cli {
    /// INI configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set kernel.T=2`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stationary phase density, periodic rate and ergodicity constants.
    Rho,
    /// One-phase limit laws of the backward and forward recurrence times.
    Limits,
    /// Distances of the time-t laws to the limit laws over whole periods.
    Converge,
    /// Simulated arrival paths and recurrence times.
    Simulate,
    /// A long PDMP trajectory and its occupation measure against the joint limit.
    Pdmp,
    /// Renewal-equation rate and exact time-t laws.
    Volterra,
    /// Consistency checks; exits 1 if any fails.
    Check {
        /// Perturb ρ by 1% before checking (the checks must then fail).
        #[arg(long)]
        corrupt_rho: bool,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RENEWAL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("RENEWAL_THREADS: cannot parse {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("RENEWAL_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.output_dir.display())))?;
    match cli.command {
        Command::Rho => commands::rho(&cfg),
        Command::Limits => commands::limits(&cfg),
        Command::Converge => commands::converge(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Pdmp => commands::pdmp(&cfg),
        Command::Volterra => commands::volterra(&cfg),
        Command::Check { corrupt_rho } => commands::check(&cfg, corrupt_rho),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("renewal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
