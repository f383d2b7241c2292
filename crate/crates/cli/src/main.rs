mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segdec::dataio::AnnotationKind;
use segdec::train::{LossKind, Resolution};

use config::ArchChoice;

#[derive(Parser, Debug)]
#[command(
    name = "segdec",
    version,
    about = "Two-stage surface defect detection: train, evaluate and run"
)]
struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for `infer --map`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Folds trained concurrently.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic crack corpus.
    Synth(SynthArgs),
    /// Train both stages on every cross-validation fold.
    Train(TrainArgs),
    /// Score held-out folds of a training run, or a file of scores.
    Eval(EvalArgs),
    /// Time inference at full and half resolution.
    Bench(BenchArgs),
    /// Score one image.
    Infer(InferArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    pub pos: usize,
    #[arg(long, default_value_t = 60)]
    pub neg: usize,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Dataset root: product folders, or a directory holding manifest.jsonl.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub annotation: Option<AnnotationKind>,
    #[arg(long)]
    pub resolution: Option<Resolution>,
    /// Random 90° rotations during training.
    #[arg(long)]
    pub rotate: bool,
    /// Segmentation steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub steps_decision: Option<usize>,
    #[arg(long)]
    pub lr_seg: Option<f64>,
    #[arg(long)]
    pub lr_dec: Option<f64>,
    /// Keep only this many defective images in each training split.
    #[arg(long)]
    pub subsample_positives: Option<usize>,
    #[arg(long, value_enum)]
    pub arch: Option<ArchChoice>,
    #[arg(long)]
    pub mask_suffix: Option<String>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct EvalSource {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// CSV with `image_id`, `score` and `defective` columns.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: EvalSource,
    /// Dataset root, if it moved since training.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Weight file; without it a freshly initialized `--arch` model is timed.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ArchChoice::Full)]
    pub arch: ArchChoice,
    #[arg(long, default_value_t = 1408)]
    pub height: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Write the segmentation probability map (1/8 resolution) as a PNG.
    #[arg(long)]
    pub map: Option<PathBuf>,
}

/// Options shared by every subcommand.
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
    let global = Global {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        jobs: cli.jobs,
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&global, a),
        Command::Train(a) => commands::train(&global, a),
        Command::Eval(a) => commands::eval(&global, a),
        Command::Bench(a) => commands::bench(&global, a),
        Command::Infer(a) => commands::infer(&global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
