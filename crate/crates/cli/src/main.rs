mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use devscreen_core::TaskKind;

#[derive(Parser, Debug)]
#[command(name = "devscreen", version, about = "Early anomaly detection in timed microscopy sequences")]
struct Cli {
    /// Global random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output or run directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set model.hidden_dim=128`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
pub struct Common {
    #[arg(long)]
    task: Option<TaskKind>,
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (manifest plus frames) to --out.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, value_name = "PIXELS")]
        image_size: Option<u32>,
        #[arg(long)]
        separability: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        /// Only write the manifest.
        #[arg(long)]
        manifest_only: bool,
    },
    /// Check a manifest against the dataset schema.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; --out is the run directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Frame accuracy of a trained run on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: commands::SplitPart,
    },
    /// Earliest-confident decisions on the test split.
    Decide {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
        /// Fixed confidence threshold.
        #[arg(long, conflicts_with = "optimized")]
        threshold: Option<f64>,
        /// Fit smoothing window and per-step thresholds on validation.
        #[arg(long)]
        optimized: bool,
        /// Causal smoothing window for fixed-threshold decisions.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Render SVG figures from a run's decision outputs.
    Plot {
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
