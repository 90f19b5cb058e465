//! `gaitrec` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

#[derive(Parser, Debug)]
#[command(name = "gaitrec", version, about = "Gait recognition from smartphone inertial data")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Shared {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// File of key=value settings; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic recordings with ground-truth masks and steps.
    Synth(SynthArgs),
    /// Cut walking sessions out of a recording with a trained segmentation network.
    ExtractWalk(ExtractArgs),
    /// Detect step boundaries in a recording.
    SegmentSteps(StepArgs),
    /// Build a dataset from a directory of recordings.
    BuildDataset(BuildArgs),
    /// Train a network on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a trained network on a dataset directory.
    Eval(EvalArgs),
    /// ROC curve, AUC and EER for a score file and a label file.
    Roc(RocArgs),
    /// Hand-crafted features with a linear margin classifier.
    Baseline(BaselineArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Continuous walking padded by one idle second at each end.
    Walking,
    /// Alternating walking and idle stretches.
    Activity,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Subject pairs that differ only in gyroscope phase.
    #[arg(long)]
    pub twins: Option<usize>,
    /// Walking seconds per subject (walking kind) or total seconds (activity kind).
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub recordings: Option<usize>,
    #[arg(long, value_enum, default_value = "walking")]
    pub kind: SynthKind,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct StepArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    Interp,
    Fixed,
    AuthH,
    AuthV,
    Extract,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub recipe: Recipe,
    /// 0, 1step or a duration such as 1.28s.
    #[arg(long)]
    pub overlap: Option<String>,
    /// Directory of recordings.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Segnet,
    Cnn,
    LstmSl,
    LstmBi,
    LstmDl,
    Hybrid,
    CnnFixLstm,
    CnnLstmFix,
    Auth,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Dataset directory written by `build-dataset`.
    #[arg(long)]
    pub data: PathBuf,
    /// Model providing the frozen branch (fix variants) or the CNN (auth).
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// LSTM hidden size for identification models.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Channel-count divisor for the segmentation network.
    #[arg(long)]
    pub width_divisor: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
}

#[derive(Args, Debug)]
pub struct RocArgs {
    /// One score per line.
    #[arg(long)]
    pub scores: PathBuf,
    /// One 0/1 label per line.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Fourier,
    Wavelet,
    Eigengait,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub data: PathBuf,
    /// Fourier bins or eigen components.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = settings::Settings::load(&cli.shared).and_then(|s| match cli.command {
        Command::Synth(a) => commands::synth(&s, &a),
        Command::ExtractWalk(a) => commands::extract_walk(&s, &a),
        Command::SegmentSteps(a) => commands::segment_steps(&s, &a),
        Command::BuildDataset(a) => commands::build_dataset(&s, &a),
        Command::Train(a) => commands::train(&s, &a),
        Command::Eval(a) => commands::eval(&s, &a),
        Command::Roc(a) => commands::roc(&s, &a),
        Command::Baseline(a) => commands::baseline(&s, &a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
