//! `toa`: simulate arrival times, reconstruct emission events and run the
//! perturbation experiment from the command line.
//!
//! Exit codes: 0 success, 1 layout validation failed, 2 configuration error,
//! 3 parse error, 4 numerical failure, 5 I/O error.

mod commands;
mod failure;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toa_core::solver::Method;

use failure::Failure;
use scenario::{defaults_text, Scenario};

#[derive(Parser)]
#[command(name = "toa", version, about = "Moving point-source reconstruction from times of arrival")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (`key = value` lines); see `validate --print-defaults`
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Solver: five, seven or oracle
    #[arg(long)]
    method: Option<Method>,
    /// Seed for all generated noise
    #[arg(long)]
    seed: Option<u64>,
    /// Prefix of the output files
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic TOA data and the matching ground truth
    Simulate(Common),
    /// Recover emission events from a TOA file
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Dense (`T_1..T_K`) or sparse (`j,k,T`) TOA CSV
        #[arg(long)]
        toa: PathBuf,
        /// Ground-truth trajectory (`t,x,y,z`) for error columns
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the log-log perturbation experiment
    Stability {
        #[command(flatten)]
        common: Common,
        /// Comma-separated relative noise levels
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Check the sensor geometry of a scenario or layout file
    Validate {
        #[command(flatten)]
        common: Common,
        /// Print the default scenario with every key documented
        #[arg(long)]
        print_defaults: bool,
    },
}

fn scenario(common: &Common) -> Result<Scenario, Failure> {
    let mut s = match &common.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Some(m) = common.method {
        s.method = m;
    }
    if let Some(seed) = common.seed {
        s.set_seed(seed);
    }
    if let Some(out) = &common.out {
        s.output = out.clone();
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(common) => commands::simulate(&scenario(&common)?),
        Command::Reconstruct { common, toa, truth } => commands::reconstruct(&scenario(&common)?, &toa, truth.as_deref()),
        Command::Stability { common, levels } => {
            let mut s = scenario(&common)?;
            if let Some(levels) = levels {
                s.levels = levels;
            }
            commands::stability(&s)
        }
        Command::Validate { common, print_defaults } => {
            if print_defaults {
                print!("{}", defaults_text());
                return Ok(());
            }
            if common.scenario.is_none() {
                return Err(Failure::config("validate needs --scenario <path> or --print-defaults"));
            }
            commands::validate(&scenario(&common)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
