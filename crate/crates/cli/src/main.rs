//! `ragseco` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ragseco::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "ragseco", version, about = "Drug-drug interaction event prediction with RaGSECo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Flags override the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1 (known-known), 2 (known-new) or 3 (new-new)
    #[arg(long)]
    task: Option<String>,
    /// Fold index or `all`
    #[arg(long)]
    fold: Option<String>,
    /// Number of cross-validation folds when splitting
    #[arg(long)]
    folds: Option<usize>,
    /// With `--fold all`, train the folds concurrently
    #[arg(long)]
    parallel: bool,
    /// full, -R, -M, -I, -S, -E or -C
    #[arg(long, allow_hyphen_values = true)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hyperparameter profile: dataset1, dataset2 or synthetic
    #[arg(long)]
    profile: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    drugs: Option<PathBuf>,
    #[arg(long)]
    ddis: Option<PathBuf>,
    #[arg(long)]
    charset: Option<PathBuf>,
    /// Split manifest (default: <out>/split.manifest)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Extra `KEY=VALUE` setting, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Log progress to stderr
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a cross-validation split manifest
    Split(Common),
    /// Check a manifest against the dataset
    ValidateManifest(Common),
    /// Train one fold (or all) and write checkpoint and loss log
    Train(Common),
    /// Score a fold's test interactions with a checkpoint
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file (default: <out>/fold<f>/checkpoint.txt)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Predict event types for drug pairs
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Tab-separated file of drug id pairs
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Also rank all pairs outside the training fold and keep the top N per event
        #[arg(long)]
        top: Option<usize>,
    },
    /// Generate a cluster-structured toy dataset
    Synth(Common),
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) => 1,
        Error::Data { .. } | Error::Shape(_) | Error::Io { .. } => 2,
        Error::Numerical(_) => 3,
    }
}

fn run(command: Command) -> ragseco::Result<()> {
    match command {
        Command::Split(c) => commands::split(&RunConfig::resolve(&c)?),
        Command::ValidateManifest(c) => commands::validate_manifest(&RunConfig::resolve(&c)?),
        Command::Train(c) => commands::train_cmd(&RunConfig::resolve(&c)?),
        Command::Evaluate { common, checkpoint } => commands::evaluate(&RunConfig::resolve(&common)?, &checkpoint),
        Command::Predict {
            common,
            checkpoint,
            pairs,
            top,
        } => commands::predict(&RunConfig::resolve(&common)?, &checkpoint, &pairs, top),
        Command::Synth(c) => commands::synth(&RunConfig::resolve(&c)?),
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
    let verbose = match &cli.command {
        Command::Split(c) | Command::ValidateManifest(c) | Command::Train(c) | Command::Synth(c) => c.verbose,
        Command::Evaluate { common, .. } | Command::Predict { common, .. } => common.verbose,
    };
    env_logger::Builder::new()
        .filter_level(if verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
