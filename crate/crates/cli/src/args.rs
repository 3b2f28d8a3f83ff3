use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "specdet",
    version,
    about = "Detect Spectre gadgets in assembly and Spectre-style attacks in cache counter traces"
)]
pub struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, env = "SPECDET_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a directory of assembly files into a gadget manifest.
    IngestGadgets(IngestArgs),
    /// Train skip-gram token embeddings on a manifest.
    TrainEmbedding(TrainEmbeddingArgs),
    /// Turn a manifest into a features file.
    Encode(EncodeArgs),
    /// Train one classifier.
    Train(TrainArgs),
    /// Score every function in an assembly file or manifest.
    Scan(ScanArgs),
    /// Score every sample of a counter trace.
    Detect(DetectArgs),
    /// Record live hardware counters into a trace.
    Collect(CollectArgs),
    /// Generate a labeled synthetic counter trace.
    Synth(SynthArgs),
    /// Split, cross-validate and test classifiers; write reports.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub dir: PathBuf,
    /// 1 for Spectre gadgets, 0 for benign code.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub label: u8,
    #[arg(long)]
    pub out: PathBuf,
    /// Add to an existing manifest instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct TrainEmbeddingArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 256)]
    pub maxlen: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 15)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embedding: PathBuf,
    /// Keep full sequences (for the CNN) instead of mean-pooled vectors.
    #[arg(long)]
    pub sequence: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Cnn,
    Nb,
    Svc,
    Lr,
    Rf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindOrAll {
    Cnn,
    Nb,
    Svc,
    Lr,
    Rf,
    All,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub classifier: Kind,
    /// Features file, or a labeled trace CSV.
    #[arg(long)]
    pub features: PathBuf,
    /// Z-score inputs [default: true for traces, false otherwise].
    #[arg(long)]
    pub standardize: Option<bool>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embedding: PathBuf,
    /// Assembly file or gadget manifest.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Write verdicts here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Aggregate {
    Pid,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Emit one majority verdict per process.
    #[arg(long, value_enum)]
    pub aggregate: Option<Aggregate>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[arg(long, default_value_t = 1000)]
    pub interval_us: u64,
    #[arg(long, default_value_t = 10)]
    pub duration_s: u64,
    /// Processes to monitor [default: all].
    #[arg(long)]
    pub pid: Vec<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub benign: usize,
    #[arg(long, default_value_t = 250)]
    pub attack: usize,
    #[arg(long, default_value_t = 1000)]
    pub interval_us: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Features file, or a labeled trace CSV.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub classifier: KindOrAll,
    #[arg(long, default_value_t = 10)]
    pub kfold: usize,
    /// Skip cross-validation.
    #[arg(long)]
    pub no_cv: bool,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Split without stratifying by label.
    #[arg(long)]
    pub no_stratify: bool,
    /// Markdown report; a CSV twin is written next to it.
    #[arg(long)]
    pub report: PathBuf,
    /// ROC points of the test partition.
    #[arg(long)]
    pub roc: Option<PathBuf>,
}
