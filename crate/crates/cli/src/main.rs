//! `caai`: command-line front end of the cognition loop.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "caai", version, about = "Online algorithm selection for closed-loop process optimization")]
pub struct Cli {
    /// YAML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a template knowledge base and a default configuration.
    Init,
    /// Bootstrap the plant and run the cognition loop.
    Run {
        #[arg(long)]
        cycles: Option<usize>,
        #[arg(long)]
        theta: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run the portfolio on the ground truth and on simulated test functions.
    Benchmark,
    /// Summarize a run log (.jsonl) or a campaign CSV.
    Report { input: PathBuf },
    /// Dump simulated test functions and the ground truth on their grid.
    Simulate,
}

fn init_logging() -> Result<(), CliError> {
    let level = std::env::var("CAAI_LOG_LEVEL").unwrap_or_else(|_| "error".into());
    let filter = match level.to_ascii_lowercase().as_str() {
        "error" => log::LevelFilter::Error,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => return Err(CliError::Config(format!("CAAI_LOG_LEVEL must be error, info or debug, got {other}"))),
    };
    env_logger::Builder::new().filter_level(filter).format_timestamp(None).init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_logging().and_then(|()| commands::dispatch(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("caai: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
