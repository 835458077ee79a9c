//! `tinyradar` command-line driver.

mod commands;
mod config;
mod error;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tinyradar", version, about = "Radar hand-gesture pipeline")]
struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for corpora, datasets, models and reports.
    #[arg(long, global = true, env = config::DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cross-validation fold (0..5).
    #[arg(long, global = true)]
    fold: Option<usize>,
    /// Leave-one-user-out split holding out this user.
    #[arg(long, global = true)]
    held_out_user: Option<u32>,
    /// TCN filter count.
    #[arg(long, global = true)]
    filters: Option<usize>,
    /// Frames per sequence.
    #[arg(long, global = true)]
    time_steps: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus of TRD1 recordings.
    Synth,
    /// Turn the corpus into normalized RFDM sequences.
    Preprocess,
    /// Train the float network on the training split.
    Train,
    /// Evaluate a float model on the test split.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Post-training quantization of a float model.
    Quantize {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Classify a single TRD1 recording.
    Infer {
        file: PathBuf,
        /// Use the integer model instead of the float one.
        #[arg(long)]
        quantized: bool,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Parameter, MAC and layer-shape tables.
    Stats,
    /// Static activation memory plan.
    Memplan {
        #[arg(long, default_value_t = 8)]
        bits: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Preprocess => "preprocess",
            Command::Train => "train",
            Command::Eval { .. } => "eval",
            Command::Quantize { .. } => "quantize",
            Command::Infer { .. } => "infer",
            Command::Stats => "stats",
            Command::Memplan { .. } => "memplan",
        }
    }

    /// Report-only commands need no data directory on disk.
    fn writes_artifacts(&self) -> bool {
        !matches!(self, Command::Stats | Command::Memplan { .. })
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        data_dir: cli.data_dir.clone(),
        seed: cli.seed,
        fold: cli.fold,
        held_out_user: cli.held_out_user,
        filters: cli.filters,
        time_steps: cli.time_steps,
    };
    let cfg = file.resolve(&overrides)?;
    println!("config_hash={}", cfg.hash());
    if cli.command.writes_artifacts() {
        let dir = cfg.data_dir();
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(format!("{}_config.toml", cli.command.name()));
        std::fs::write(&path, cfg.to_toml())
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    }
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Eval { model } => commands::eval(&cfg, model),
        Command::Quantize { model } => commands::quantize(&cfg, model),
        Command::Infer {
            file,
            quantized,
            model,
        } => commands::infer(&cfg, &file, quantized, model),
        Command::Stats => commands::stats(&cfg),
        Command::Memplan { bits } => commands::memplan(&cfg, bits),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
