use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(
    name = "mumic",
    version,
    about = "Multi-label dual-encoder experiments"
)]
struct Cli {
    /// JSON config for the subcommand; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with noisy annotations.
    Synth,
    /// Turn annotation votes into hierarchy-closed ground truth.
    Consolidate,
    /// Stratified train/val/test split.
    Split,
    /// Train a model; writes history, checkpoint and a logit histogram.
    Train,
    /// Train once per logit_scale initialization.
    Sweep,
    /// Ranking metrics of a checkpoint or a predictions file.
    Eval,
    /// Class probabilities for every image.
    Predict,
    /// Probabilities for free-form prompts.
    Zeroshot,
    /// Per-class thresholds for a target recall.
    Thresholds,
    /// Joint-space image embeddings as CSV.
    ExportEmbeddings,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Context {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    let result = match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Consolidate => commands::consolidate(&ctx),
        Command::Split => commands::split(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Eval => commands::eval(&ctx),
        Command::Predict => commands::predict(&ctx),
        Command::Zeroshot => commands::zeroshot(&ctx),
        Command::Thresholds => commands::thresholds(&ctx),
        Command::ExportEmbeddings => commands::export_embeddings(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
