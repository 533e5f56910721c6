//! Subcommand-driven front end for the sound-change extraction and
//! dialect-mixture inference pipeline. Commands compose through files
//! only; each writes a manifest sufficient to reproduce its outputs.

mod commands;
mod config;
mod error;
mod manifest;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use config::FileConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "isogloss",
    version,
    about = "Conditioned sound-change extraction and Bayesian dialect mixture inference"
)]
struct Cli {
    /// Flat key=value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for chains and simulations (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus TSV and extract the conditioned sound changes.
    Extract(commands::extract::ExtractArgs),
    /// Fit the dialect mixture model by stochastic variational inference.
    Fit(commands::fit::FitArgs),
    /// Posterior predictive checks (entropy and accuracy families).
    Ppc(commands::ppc::PpcArgs),
    /// Randomization test: refit on language-shuffled data, Z-test on β.
    ShuffleTest(commands::shuffle::ShuffleArgs),
    /// Export per-language component means with coordinates as CSV.
    ExportMap(commands::map::MapArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    if cli.threads > 0 {
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("warning: could not configure thread pool: {err}");
        }
    }

    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(file) => file,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(err.exit_code());
        }
    };

    let result = match cli.command {
        Command::Extract(args) => commands::extract::run(args, &file),
        Command::Fit(args) => commands::fit::run(args, &file),
        Command::Ppc(args) => commands::ppc::run(args, &file),
        Command::ShuffleTest(args) => commands::shuffle::run(args, &file),
        Command::ExportMap(args) => commands::map::run(args, &file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
