//! `bliss`: score, evaluate and diagnose anomaly detection over
//! pre-extracted vision-language embeddings.

mod commands;
mod error;
mod tables;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use crate::error::{invalid, CliResult};

#[derive(Debug, Parser)]
#[command(name = "bliss", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every test embedding
    Score(commands::ScoreArgs),
    /// AUROC and FPR95 of a scores CSV against binary labels
    Eval(commands::EvalArgs),
    /// Metrics over a grid of lambda values
    Sweep(commands::SweepArgs),
    /// Text-clustering and similarity-bias diagnostics
    Diagnose(commands::DiagnoseArgs),
    /// Enumerate normal/anomaly class splits
    Splits(commands::SplitsArgs),
    /// Write a synthetic world and a ready-to-run experiment config
    Synth(commands::SynthArgs),
    /// Print the header, hash status and norm statistics of an embedding file
    Inspect(commands::InspectArgs),
}

/// `BLISS_THREADS` caps the worker pool; unset or 0 lets rayon decide.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("BLISS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| invalid(format!("BLISS_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| invalid(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    match &cli.command {
        Command::Score(a) => commands::score(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Diagnose(a) => commands::diagnose(a),
        Command::Splits(a) => commands::splits(a),
        Command::Synth(a) => commands::synth(a),
        Command::Inspect(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
