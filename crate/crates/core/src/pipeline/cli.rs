//! `terraseg <command> --config <file> [--seed N] [--out DIR]`.
//!
//! Results go to stdout as JSON. Failures print `error[<category>]: ...`
//! on stderr and exit with 2 (config), 3 (data) or 4 (runtime).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use super::commands;
use super::config::load_config;
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "terraseg", version, about = "Semantic segmentation pipeline for remote-sensing rasters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Tile scenes, masks and rasterized labels into the chunk store.
    Ingest(Args),
    /// Assign samples to stratified folds.
    Split(Args),
    /// Train a model and write its checkpoint and history.
    Train(Args),
    /// Score a checkpoint on the held-out fold.
    Evaluate(Args),
    /// Write predicted class masks for a region.
    Predict(Args),
    /// Build a catalog search URL.
    Query(Args),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

fn emit(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(command: &Command) -> Result<()> {
    let (Command::Ingest(args)
    | Command::Split(args)
    | Command::Train(args)
    | Command::Evaluate(args)
    | Command::Predict(args)
    | Command::Query(args)) = command;
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &args.out {
        cfg.override_workspace(out);
    }
    match command {
        Command::Ingest(_) => emit(&commands::cmd_ingest(&cfg)?),
        Command::Split(_) => emit(&commands::cmd_split(&cfg)?),
        Command::Train(_) => emit(&commands::cmd_train(&cfg)?),
        Command::Evaluate(_) => emit(&commands::cmd_evaluate(&cfg)?),
        Command::Predict(_) => emit(&commands::cmd_predict(&cfg)?),
        Command::Query(_) => emit(&commands::cmd_query(&cfg)?),
    }
}

/// One-line, machine-parsable error report.
pub fn render_error(e: &Error) -> String {
    format!("error[{}]: {e}", e.category().as_str())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("TERRASEG_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", render_error(&e));
            e.category().exit_code()
        }
    }
}
