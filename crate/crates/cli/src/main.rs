//! `greedy-route-pde`: data generation, training, evaluation and theory
//! checks for greedy-routed hybrid PDE solvers.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "greedy-route-pde", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample random right-hand sides and their exact solutions.
    GenerateData(Args),
    /// Fit the operator surrogate on the training split.
    TrainDeeponet(Args),
    /// Train the LSTM router on oracle-greedy rollouts.
    TrainRouter(Args),
    /// Run one policy on one test instance and write its trace.
    Run(Args),
    /// Evaluate every listed policy on the test split.
    Compare(Args),
    /// Run the randomized checks of the approximation theory.
    VerifyTheory(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Args {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out.clone_from(o);
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenerateData(a) => commands::generate_data(&a.load()?),
        Command::TrainDeeponet(a) => commands::train_surrogate(&a.load()?),
        Command::TrainRouter(a) => commands::train_routing(&a.load()?),
        Command::Run(a) => commands::run(&a.load()?),
        Command::Compare(a) => commands::compare(&a.load()?),
        Command::VerifyTheory(a) => commands::verify(&a.load()?),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
