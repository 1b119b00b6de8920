use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod parse;

#[derive(Parser)]
#[command(name = "myotransfer", version, about = "Domain adaptation experiments on EMG posture data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort of recordings.
    Synth(SynthArgs),
    /// Window recordings and write train/test feature datasets.
    Features(FeaturesArgs),
    /// Run an experiment over a cohort and write curves and confusion matrices.
    Run(RunArgs),
    /// Compare stored runs: difference matrices, top-4 similarity, correlations.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON cohort configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub amputee_fraction: Option<f64>,
    #[arg(long)]
    pub amputee_degradation: Option<f64>,
    #[arg(long)]
    pub noise_floor: Option<f64>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub variability: Option<f64>,
    #[arg(long)]
    pub reps: Option<u32>,
    #[arg(long)]
    pub movement_ms: Option<f64>,
    #[arg(long)]
    pub rest_ms: Option<f64>,
    #[arg(long)]
    pub rate_hz: Option<f64>,
}

/// Windowing flags shared by `features` and `run`.
#[derive(Args)]
pub struct WindowArgs {
    #[arg(long)]
    pub window_ms: Option<f64>,
    #[arg(long)]
    pub step_ms: Option<f64>,
    /// concat (3C features) or averaged (C features).
    #[arg(long)]
    pub feature_mode: Option<String>,
    /// Held-out repetitions, e.g. 5,6.
    #[arg(long)]
    pub test_reps: Option<String>,
}

#[derive(Args)]
pub struct FeaturesArgs {
    /// Directory of recordings, as written by `synth`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON experiment configuration; only the windowing fields are read.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Args)]
pub struct RunArgs {
    /// Directory of recordings, as written by `synth`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// II, AA or AI.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Comma-separated methods, e.g. NoTransfer,MA,MKAL.
    #[arg(long)]
    pub methods: Option<String>,
    /// start:stop:step (inclusive) or a comma-separated list.
    #[arg(long)]
    pub sizes: Option<String>,
    /// Comma-separated list or a half-open range a..b.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Cap on training vectors per source model; 0 uses all.
    #[arg(long)]
    pub source_samples: Option<usize>,
    /// Comma-separated subject ids to use as targets.
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// A stored run as LABEL=DIR; repeat for each run.
    #[arg(long = "run", required = true)]
    pub runs: Vec<String>,
    #[arg(long)]
    pub size: usize,
    /// Comma-separated methods; defaults to all.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Features(a) => commands::features(&a),
        Command::Run(a) => commands::run(&a),
        Command::Analyze(a) => commands::analyze(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
