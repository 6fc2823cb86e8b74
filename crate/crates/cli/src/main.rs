//! `adtext`: classify short Turkish ad texts into sectors with a small
//! transformer encoder. Subcommands cover the whole pipeline: vocabulary
//! building, masked-token pretraining, fine-tuning, evaluation, prediction,
//! and dataset statistics.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numeric
//! divergence during training.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use adtext_core::Result;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "adtext",
    version,
    about = "Sector classification for short Turkish ad texts with a from-scratch transformer encoder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags every subcommand understands. Values given here override the
/// configuration file, which in turn overrides built-in defaults.
#[derive(Args)]
struct Shared {
    /// Corpus file: JSONL objects with id/category/text, or CSV with that header
    #[arg(long)]
    data: Option<PathBuf>,

    /// Line-oriented `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Seed for every random choice in the run
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for artifacts [default: adtext-out]
    #[arg(long)]
    out: Option<PathBuf>,

    /// Fraction of each class assigned to the training split [default: 0.7]
    #[arg(long)]
    train_fraction: Option<f64>,

    /// Training iterations, i.e. full passes over the training set [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a WordPiece vocabulary from a corpus
    BuildVocab {
        #[command(flatten)]
        shared: Shared,
        /// Input format: jsonl or csv [default: inferred from the extension]
        #[arg(long)]
        format: Option<String>,
        /// Vocabulary budget, including special tokens and characters [default: 4000]
        #[arg(long)]
        vocab_size: Option<usize>,
        /// Minimum frequency for seed characters and merges [default: 1]
        #[arg(long)]
        min_freq: Option<u64>,
    },

    /// Pretrain the encoder with the masked-token objective
    Pretrain {
        #[command(flatten)]
        shared: Shared,
        /// Input format: jsonl or csv [default: inferred from the extension]
        #[arg(long)]
        format: Option<String>,
        /// Existing vocabulary file [default: build one from the data]
        #[arg(long)]
        vocab: Option<PathBuf>,
    },

    /// Fine-tune a classifier and report on the held-out split
    Finetune {
        #[command(flatten)]
        shared: Shared,
        /// Input format: jsonl or csv [default: inferred from the extension]
        #[arg(long)]
        format: Option<String>,
        /// Existing vocabulary file [default: build one from the data]
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Starting checkpoint, e.g. from pretrain [default: random initialization]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },

    /// Score a checkpoint on a labeled corpus
    Evaluate {
        #[command(flatten)]
        shared: Shared,
        /// Input format: jsonl or csv [default: inferred from the extension]
        #[arg(long)]
        format: Option<String>,
        /// Checkpoint to evaluate
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },

    /// Classify ad texts given as arguments
    Predict {
        #[command(flatten)]
        shared: Shared,
        /// Checkpoint to classify with
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Raw ad texts
        #[arg(required = true)]
        texts: Vec<String>,
    },

    /// Emit category-count and word-count-histogram CSVs
    Stats {
        #[command(flatten)]
        shared: Shared,
        /// Input format: jsonl or csv [default: inferred from the extension]
        #[arg(long)]
        format: Option<String>,
    },

    /// Re-render the evaluation report from a confusion-matrix CSV
    Report {
        #[command(flatten)]
        shared: Shared,
        /// Output format: text, markdown, or csv [default: text]
        #[arg(long)]
        format: Option<String>,
    },
}

/// Builds the effective configuration: defaults, then the config file, then
/// shared flags, then command-specific flags given as (key, value) pairs.
fn resolve(shared: &Shared, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    if let Some(path) = &shared.config {
        rc.apply_file(path)?;
    }
    if let Some(p) = &shared.data {
        rc.data = Some(p.clone());
    }
    if let Some(s) = shared.seed {
        rc.seed = s;
    }
    if let Some(p) = &shared.out {
        rc.out = Some(p.clone());
    }
    if let Some(f) = shared.train_fraction {
        rc.train_fraction = f;
    }
    if let Some(e) = shared.epochs {
        rc.epochs = e;
    }
    for (key, value) in extra {
        if let Some(v) = value {
            rc.set(key, v)?;
        }
    }
    Ok(rc)
}

fn path_value(path: &Option<PathBuf>) -> Option<String> {
    path.as_ref().map(|p| p.display().to_string())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildVocab {
            shared,
            format,
            vocab_size,
            min_freq,
        } => {
            let config = resolve(
                &shared,
                &[
                    ("data_format", format),
                    ("vocab_size", vocab_size.map(|v| v.to_string())),
                    ("min_freq", min_freq.map(|v| v.to_string())),
                ],
            )?;
            commands::build_vocab(&config)
        }
        Command::Pretrain {
            shared,
            format,
            vocab,
        } => {
            let config = resolve(
                &shared,
                &[("data_format", format), ("vocab", path_value(&vocab))],
            )?;
            commands::pretrain(&config)
        }
        Command::Finetune {
            shared,
            format,
            vocab,
            checkpoint,
        } => {
            let config = resolve(
                &shared,
                &[
                    ("data_format", format),
                    ("vocab", path_value(&vocab)),
                    ("checkpoint", path_value(&checkpoint)),
                ],
            )?;
            commands::finetune_cmd(&config)
        }
        Command::Evaluate {
            shared,
            format,
            checkpoint,
        } => {
            let config = resolve(
                &shared,
                &[
                    ("data_format", format),
                    ("checkpoint", path_value(&checkpoint)),
                ],
            )?;
            commands::evaluate_cmd(&config)
        }
        Command::Predict {
            shared,
            checkpoint,
            texts,
        } => {
            let config = resolve(&shared, &[("checkpoint", path_value(&checkpoint))])?;
            commands::predict(&config, &texts)
        }
        Command::Stats { shared, format } => {
            let config = resolve(&shared, &[("data_format", format)])?;
            commands::stats(&config)
        }
        Command::Report { shared, format } => {
            let config = resolve(&shared, &[("report_format", format)])?;
            commands::report(&config)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_numeric() { 3 } else { 2 });
    }
}
