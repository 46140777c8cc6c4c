use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Gait-video ataxia assessment: tracking, participant isolation, gait
/// features, random-forest models, SHAP explanations and evaluation.
#[derive(Debug, Parser)]
#[command(name = "gaitrisk", version)]
pub struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for all randomness (overrides the config file).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: manifest, detections and landmarks.
    Synth(SynthArgs),
    /// Track people across frames from a detections file.
    Track(TrackArgs),
    /// Pick the participant among the tracks of one video.
    Isolate(IsolateArgs),
    /// Extract the feature table for every video of a manifest.
    Features(FeaturesArgs),
    /// Train a model on a feature table.
    Train(TrainArgs),
    /// Cross-validate on a feature table.
    Eval(EvalArgs),
    /// SHAP values of a trained model on a feature table.
    Explain(ExplainArgs),
    /// Manifest to report: features, evaluation, final model and explanations.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub severity_jitter: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Detections JSONL.
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub max_age: Option<usize>,
    #[arg(long)]
    pub min_hits: Option<usize>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IsolateArgs {
    /// Tracks JSONL as written by `track`.
    #[arg(long)]
    pub tracks: PathBuf,
    /// Defaults to the file stem.
    #[arg(long)]
    pub video_id: Option<String>,
    /// Frame rate, used to restrict scores to the analysis window.
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    #[arg(long)]
    pub clip_seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Dataset manifest JSONL.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    RiskBinary,
    SeverityRegression,
    Severity4class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    KFold,
    LeaveOneSiteOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    All,
    Rfecv,
    ImportanceTopk,
    RiskFeatures,
    SeverityFeatures,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long, value_enum)]
    pub selection: Option<SelectionArg>,
    /// Features kept by importance-topk.
    #[arg(long)]
    pub k: Option<usize>,
    /// Features removed per RFECV round.
    #[arg(long)]
    pub rfecv_step: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature table CSV.
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args, Default)]
pub struct ProtocolArgs {
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    /// Hold out only this site (leave-one-site-out).
    #[arg(long)]
    pub site: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
