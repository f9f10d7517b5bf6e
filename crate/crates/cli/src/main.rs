use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use error::CliError;

/// Multi-task transformer for EEG gaze regression.
#[derive(Parser, Debug)]
#[command(name = "gazemtl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for data generation, splitting, initialization and dropout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Geometry preset.
    #[arg(long, default_value = "desk", value_parser = ["paper", "desk"])]
    pub preset: String,
    /// TOML file with [model], [train], [synth] and [sweep] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path (file for `gen`, directory otherwise).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Default output directory when --out is absent.
    #[arg(long = "out-dir", env = "GAZEMTL_OUT_DIR", default_value = ".", hide = true)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = ["adam", "sgd"])]
    pub optimizer: Option<String>,
    /// Reconstruction weight α₁.
    #[arg(long)]
    pub alpha_recon: Option<f64>,
    /// Pupil-size weight α₂.
    #[arg(long)]
    pub alpha_pupil: Option<f64>,
    /// L2 coefficient λ.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset container.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of samples.
        #[arg(long, short, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        /// Omit pupil targets.
        #[arg(long)]
        no_pupil: bool,
    },
    /// Train one model and write its report and best checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "mtl1", value_parser = ["base", "mtl1", "mtl2"])]
        variant: String,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Train across reconstruction weights and seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated reconstruction weights, strictly increasing.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Finite-difference gradient checks over every layer and the desk model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Maximum relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Check at most this many entries per parameter.
        #[arg(long)]
        max_entries: Option<usize>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Scatter of predicted versus true gaze (CSV and SVG).
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "train", value_parser = ["train", "val", "test", "all"])]
        split: String,
        /// Skip the SVG.
        #[arg(long)]
        no_svg: bool,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test", "all"])]
        split: String,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { common, n, no_pupil } => commands::gen(&common, n as usize, !no_pupil),
        Command::Train { common, data, variant, overrides } => commands::train(&common, &data, &variant, &overrides),
        Command::Sweep { common, data, weights, seeds, overrides } => {
            commands::sweep(&common, &data, weights, seeds, &overrides)
        }
        Command::Gradcheck { common, tolerance, eps, max_entries, inject_fault } => {
            commands::gradcheck(&common, tolerance, eps, max_entries, inject_fault)
        }
        Command::Plot { common, checkpoint, data, split, no_svg } => {
            commands::plot(&common, &checkpoint, &data, &split, !no_svg)
        }
        Command::Eval { common, checkpoint, data, split } => commands::eval(&common, &checkpoint, &data, &split),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
