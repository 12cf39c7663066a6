//! Command-line entry point: synthesize data, preprocess, train, evaluate, analyze.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "emg-voicing",
    version,
    about = "Silent-speech EMG to speech features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint read by eval and analyze.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset root.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic paired dataset.
    Synth(Common),
    /// Write cleaned, resampled EMG for every recording.
    Preprocess(Common),
    /// Train and write checkpoints plus train_log.csv.
    Train(Common),
    /// Per-utterance losses, predicted features and optional WER.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Tab-separated `utterance<TAB>words` transcripts to score.
        #[arg(long)]
        hypotheses: Option<PathBuf>,
    },
    /// Phoneme confusion and articulatory feature reports.
    Analyze(Common),
}

fn config(common: &Common, hypotheses: Option<PathBuf>) -> Result<RunConfig> {
    RunConfig::load(
        common.config.as_deref(),
        &Overrides {
            out: common.out.clone(),
            seed: common.seed,
            checkpoint: common.checkpoint.clone(),
            dataset: common.dataset.clone(),
            hypotheses,
        },
    )
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(c) => commands::synth(&config(&c, None)?),
        Command::Preprocess(c) => commands::preprocess(&config(&c, None)?),
        Command::Train(c) => commands::train(&config(&c, None)?),
        Command::Eval { common, hypotheses } => commands::eval(&config(&common, hypotheses)?),
        Command::Analyze(c) => commands::analyze(&config(&c, None)?),
    }
}
