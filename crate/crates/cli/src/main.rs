//! `tlgs`: evaluate, compare and apply trial-level general surrogates.

mod config;
mod error;
mod estimate;
mod evaluate;
mod manifest;
mod predict;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Worst split R-hat above which a run soft-fails.
pub const RHAT_LIMIT: f64 = 1.1;

pub enum Status {
    Ok,
    /// Outputs were written, with diagnostics warnings.
    SoftFail(Vec<String>),
}

#[derive(Debug, Parser)]
#[command(name = "tlgs", version, about = "Trial-level general surrogate evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    Estimate(estimate::EstimateArgs),
    Evaluate(evaluate::EvaluateArgs),
    Compare(evaluate::CompareArgs),
    Predict(predict::PredictArgs),
    Simulate(simulate::SimulateArgs),
    Report(evaluate::ReportArgs),
}

impl Command {
    fn workers(&self) -> Option<usize> {
        match self {
            Command::Evaluate(a) => a.run.workers,
            Command::Predict(a) => a.run.workers,
            Command::Simulate(a) => a.run.workers,
            _ => std::env::var("TLGS_WORKERS").ok().and_then(|v| v.parse().ok()),
        }
    }
}

fn dispatch(command: Command) -> Result<Status, CliError> {
    let workers = command.workers().unwrap_or(0);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let workers = rayon::current_num_threads();
    match command {
        Command::Estimate(a) => estimate::run(a, workers),
        Command::Evaluate(a) => evaluate::run(a, workers),
        Command::Compare(a) => evaluate::compare_cmd(a, workers),
        Command::Predict(a) => predict::run(a, workers),
        Command::Simulate(a) => simulate::run(a, workers),
        Command::Report(a) => evaluate::report(a, workers),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::SoftFail(warnings)) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
