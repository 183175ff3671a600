//! `cftc`: synthesize data, train, evaluate, diagnose label-correlation bias
//! and run label interventions.

mod commands;
mod error;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use cftc::training::{EncoderMode, Selection};
use clap::{Args, Parser, Subcommand};

use crate::error::ExitStatus;

#[derive(Debug, Parser)]
#[command(name = "cftc", version, about = "Counterfactual multi-label text classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with a planted label shortcut.
    Synth(SynthArgs),
    /// Train a model and write its checkpoint and training log.
    Train(TrainArgs),
    /// Score every prediction head on a labelled dataset.
    Eval(EvalArgs),
    /// Compare predicted label co-occurrence before and after de-biasing.
    Bias(BiasArgs),
    /// Predict one text under a chosen set of given labels.
    Intervene(InterveneArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator spec (key = value). Defaults to the shortcut benchmark.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training config (key = value). Unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file, or a directory containing train.tsv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Feed the unmasked text prediction to the label extractor.
    #[arg(long)]
    no_mask: bool,
    /// Drop the counterfactual loss and report the fused head.
    #[arg(long)]
    no_debias: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_parser = parse_encoder_mode)]
    encoder_mode: Option<EncoderMode>,
    /// Documents used to pick the best epoch.
    #[arg(long = "select", value_parser = parse_selection)]
    selection: Option<Selection>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file, or a directory containing test.tsv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BiasArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file, or a directory containing test.tsv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also render the three matrices as PNG heatmaps.
    #[arg(long)]
    plots: bool,
}

#[derive(Debug, Args)]
struct InterveneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    text: String,
    /// Comma-separated label names; an empty string means no labels.
    /// Without it the model's own text-only prediction is used.
    #[arg(long)]
    given: Option<String>,
    /// Also write the table and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_encoder_mode(s: &str) -> Result<EncoderMode, String> {
    s.parse().map_err(|e: cftc::Error| e.to_string())
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    s.parse().map_err(|e: cftc::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bias(a) => commands::bias(a),
        Command::Intervene(a) => commands::intervene(a),
    };
    match outcome {
        Ok(()) => ExitCode::from(ExitStatus::Success as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status() as u8)
        }
    }
}
