use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use kd_core::corpus::DataFormat;
use serde::{Serialize, Serializer};

/// Knowledge-distillation experiments: data preparation, teacher training,
/// soft-label export, student distillation, evaluation, sweeps, benchmarks.
#[derive(Debug, Parser, Serialize)]
#[command(name = "kd", version)]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// key=value file supplying defaults for flags not given on the command line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Load, clean, split, build the vocabulary, and encode a dataset.
    Prepare(PrepareArgs),
    /// Train the built-in teacher on hard labels.
    TrainTeacher(TeacherArgs),
    /// Write a trained teacher's class probabilities as soft labels.
    ExportSoftLabels(ExportArgs),
    /// Train the student with the blended hard/soft objective.
    Distill(DistillArgs),
    /// Score a checkpoint on one split.
    Evaluate(EvaluateArgs),
    /// Distill over a grid of lambda values and replicate seeds.
    Sweep(SweepArgs),
    /// Forward-pass latency and size comparison of two checkpoints.
    Bench(BenchArgs),
}

/// A file path, or `-` for standard output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Stdout,
    File(PathBuf),
}

impl FromStr for Output {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "-" { Output::Stdout } else { Output::File(s.into()) })
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Output::Stdout => f.write_str("-"),
            Output::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl Serialize for Output {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Examples per class.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Fraction of labels resampled to a different class.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 12)]
    pub words_per_class: usize,
    /// Output file (.csv or .jsonl), or - for JSON Lines on stdout.
    #[arg(long)]
    pub out: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    /// Dataset file with id, text, label.
    #[arg(long)]
    pub data: PathBuf,
    /// csv or jsonl; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<DataFormat>,
    /// Class count; otherwise the distinct labels are mapped onto 0..n.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = kd_core::corpus::DEFAULT_MAX_SIZE)]
    pub max_vocab: usize,
    #[arg(long, default_value_t = kd_core::corpus::DEFAULT_MIN_FREQ)]
    pub min_freq: usize,
    #[arg(long, default_value_t = kd_core::corpus::DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// train,validation,test fractions.
    #[arg(long, value_delimiter = ',', num_args = 1..=3, default_values_t = [0.7, 0.1, 0.2])]
    pub ratios: Vec<f64>,
}

/// Optimizer and stopping knobs shared by the training commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub min_delta: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TeacherArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Export only the training split instead of every split.
    #[arg(long)]
    pub train_only: bool,
    #[arg(long)]
    pub out: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct DistillArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Weight of the soft-label term.
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    /// Soft-label JSON Lines file.
    #[arg(long, conflicts_with = "teacher")]
    pub soft_labels: Option<PathBuf>,
    /// Teacher checkpoint to generate soft labels from.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the training report (default: beside the checkpoint).
    #[arg(long)]
    pub report: Option<Output>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    /// train, validation, or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value = "-")]
    pub out: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, conflicts_with = "teacher", required_unless_present = "teacher")]
    pub soft_labels: Option<PathBuf>,
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Comma-separated lambda values (default 0.08 to 0.20 in steps of 0.02).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Replicate seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2])]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value = "-")]
    pub out: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub student: PathBuf,
    /// Teacher checkpoint; a freshly initialized teacher preset when omitted.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    #[arg(long, default_value = "-")]
    pub out: Output,
}
