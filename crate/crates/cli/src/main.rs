//! `hbcoop`: Monte Carlo runs, sweeps, beam patterns, OFDM runs and self-checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Preset;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("validation failed")]
    Validation,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Validation => 3,
        }
    }
}

impl From<hbcoop_core::Error> for CliError {
    fn from(e: hbcoop_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hbcoop",
    version,
    about = "Cooperative mmWave hybrid beamforming power minimization"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration (a `config.json` echo is also accepted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named base configuration the file is layered on.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Master seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo run of the scenario (every sweep point if a sweep is given).
    Run(Common),
    /// Monte Carlo run over the configured sweep axis.
    Sweep(Common),
    /// Normalized per-BS gain patterns for FDP, FHP and PHP.
    BeamPattern(Common),
    /// Oracle and property self-checks.
    Validate {
        /// Inject a known defect to confirm the checks catch it.
        #[arg(long, hide = true, default_value = "none")]
        inject: String,
    },
    /// Monte Carlo OFDM run plus the per-subcarrier table of one realization.
    OfdmRun(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let load = |c: &Common| {
        config::load(
            c.config.as_deref(),
            c.preset,
            c.seed,
            c.workers,
            c.out.as_deref(),
        )
    };
    let result = match &cli.command {
        Command::Run(c) => load(c).and_then(|cfg| commands::run(&cfg, false)),
        Command::Sweep(c) => load(c).and_then(|cfg| commands::run(&cfg, true)),
        Command::BeamPattern(c) => load(c).and_then(|cfg| commands::beam_pattern(&cfg)),
        Command::Validate { inject } => commands::validate(inject),
        Command::OfdmRun(c) => load(c).and_then(|cfg| commands::ofdm_run(&cfg)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hbcoop: {e}");
            ExitCode::from(e.code())
        }
    }
}
