//! The `tabitd` command-line pipeline: fuse raw records, pretrain, train,
//! evaluate, explain and predict.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tabitd_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tabitd", version, about = "Threat detection over fused IDS and UEBA records")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse IDS and UEBA records into fused, normalized dataset files.
    Fuse(FuseArgs),
    /// Self-supervised pretraining of the encoder.
    Pretrain(PretrainArgs),
    /// Supervised training, optionally preceded by pretraining.
    Train(TrainArgs),
    /// Score a model on a fused dataset.
    Evaluate(EvaluateArgs),
    /// Mask-based feature importance per sample.
    Explain(ExplainArgs),
    /// Predict classes for raw records.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Headerless KDD/NSL-KDD CSV.
    #[arg(long)]
    pub ids: Option<PathBuf>,
    /// UEBA records, CSV with header or one JSON object per line.
    #[arg(long)]
    pub ueba: Option<PathBuf>,
    /// Schema TOML; the bundled default when omitted.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Training split output.
    #[arg(long)]
    pub out: PathBuf,
    /// Test split output; defaults to the training path with a `.test` infix.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    /// Stratified test share; 0 writes a single file.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML file with `[encoder]`, `[train]` and `[pretrain]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Any `section.key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run self-supervised pretraining on the same rows first.
    #[arg(long)]
    pub pretrain: bool,
    /// Start from the encoder of a saved model.
    #[arg(long, conflicts_with = "pretrain")]
    pub warm_start: Option<PathBuf>,
    /// Oversample minority classes up to this fraction of the largest class.
    #[arg(long, value_name = "FLOOR", num_args = 0..=1, default_missing_value = "0.1")]
    pub resample: Option<f64>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for the report files.
    #[arg(long)]
    pub out: PathBuf,
    /// Bundled reference table to compare against.
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Directory for the explanation files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    Ids,
    Ueba,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputKind::Ids)]
    pub source: InputKind,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::FingerprintMismatch { .. } => EXIT_SCHEMA,
        Error::Diverged(_) => EXIT_TRAINING,
        _ => EXIT_USAGE,
    }
}

/// Runs one command and maps its outcome to a process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Fuse(a) => commands::fuse(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Explain(a) => commands::explain(&a),
        Command::Predict(a) => commands::predict(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
