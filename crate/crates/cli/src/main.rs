use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{positive, RunConfig};
use output::Outcome;

/// Modulating-function null controls, state estimation and feedback.
#[derive(Debug, Parser)]
#[command(name = "modfun", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run description (.toml or .json); paths inside are relative to it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for generated inputs and initial states (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Time step in seconds (overrides the config).
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum Command {
    /// Design modulating pairs and write them as bundles.
    Nullcontrol,
    /// Estimate functionals / reconstruct the state from input–output records.
    Estimate,
    /// Run a closed loop realized by modulating pairs.
    Feedback,
    /// Open-loop simulation.
    Simulate,
    /// Boundary-feedback stabilization of the string.
    DemoWave,
    /// State reconstruction for the reaction–diffusion plate.
    DemoHeat,
}

/// Exit code 2 for invalid input, 3 for numerical failure.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<modfun_core::Error> for Failure {
    fn from(e: modfun_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dt) = cli.dt {
        cfg.dt = Some(positive("--dt", dt)?);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    let outcome = commands::dispatch(cli.command, &cfg)?;
    outcome.write(&cli.out)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for line in &outcome.failures {
                    eprintln!("residual check failed: {line}");
                }
                ExitCode::from(3)
            }
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
