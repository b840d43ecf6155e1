//! `tsvd`: train local tSVD bases on IDX image files, evaluate them, emit
//! identification artifacts, and run a synthetic self-test.

mod commands;
mod config;
mod exit;
mod selftest;
mod store;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;
use exit::CliError;

#[derive(Debug, Parser)]
#[command(name = "tsvd", version, about = "Local tSVD classification of image data")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one basis per class for each k and write them under --out
    Train,
    /// Classify the test set with saved bases and write rate tables
    Evaluate,
    /// Write ROC curves, a similarity heatmap, and singular-tube norms
    Identify,
    /// Check fast paths and invariants on seeded synthetic data
    Selftest {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.flags.resolve()?;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Evaluate => commands::evaluate_cmd(&cfg),
        Command::Identify => commands::identify(&cfg),
        Command::Selftest { inject_fault } => selftest::run(cfg.seed, inject_fault, cfg.par),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
