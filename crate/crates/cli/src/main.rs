//! `flipbench`: generate, audit, split, export, evaluate and report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

#[derive(Parser, Debug)]
#[command(name = "flipbench", version, about = "Paired causal-reasoning benchmark pipeline")]
pub struct Cli {
    /// Seed for generation and splitting.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Pipeline config (TOML) supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Raise log verbosity; RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a balanced benchmark from an event-triple file.
    Generate(GenerateArgs),
    /// Report phrases or questions that leak the label.
    Audit(AuditArgs),
    /// Apply a phrase replacement map to a benchmark.
    Replace(ReplaceArgs),
    /// Pairwise train/test split.
    Split(SplitArgs),
    /// Write training records for the external trainer.
    ExportTraining(ExportArgs),
    /// Query an inference provider on the test split.
    Evaluate(EvaluateArgs),
    /// Aggregate result files into metrics and degradation tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// confounder, chain or collider.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub pairs_per_category: Option<usize>,
    /// Event triples (JSONL, JSON or CSV) tagged with a base/opposite pool.
    #[arg(long)]
    pub triples: Option<PathBuf>,
    /// Template set (TOML); the built-in set is used otherwise.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Ignore pool tags and draw every category from one pool.
    #[arg(long)]
    pub share_pools: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditMode {
    Count,
    Similarity,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedderKind {
    Hashing,
    Http,
    Process,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long, value_enum, default_value = "count")]
    pub mode: AuditMode,
    /// Neighbors per question (similarity mode).
    #[arg(long)]
    pub k: Option<usize>,
    /// Flag phrases whose score exceeds this (count mode).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Precomputed embedding table (JSONL of {id, vector}).
    #[arg(long, conflicts_with = "embedder")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub embedder: Option<EmbedderKind>,
    #[arg(long, env = config::ENV_EMBED_URL)]
    pub embed_url: Option<String>,
    /// Embedding command, e.g. "python3 embed.py".
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    pub embed_command: Option<Vec<String>>,
    /// Embedding cache (JSONL), reused across runs.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplaceArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Replacement map: {"old": "new"} or [{from, to, triple_ids?}].
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleArg {
    Linear,
    Stepwise,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Train split written by `split`.
    #[arg(long)]
    pub split: PathBuf,
    /// nocot, explicit or implicit.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long)]
    pub stages: Option<u32>,
    /// Fraction of total optimizer steps spent ramping.
    #[arg(long)]
    pub ramp_frac: Option<f64>,
    /// Masked share of the reasoning span at the end of the ramp.
    #[arg(long)]
    pub terminal: Option<f64>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<u64>,
    /// Inject the default distractor prefix.
    #[arg(long)]
    pub noisy: bool,
    /// Inject the prefix read from this file.
    #[arg(long, conflicts_with = "noisy")]
    pub noisy_prefix: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionArg {
    Clean,
    Noisy,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Test split written by `split`.
    #[arg(long)]
    pub test: PathBuf,
    /// Provider config file, or a built-in mock: gold-echo, paired-label.
    #[arg(long)]
    pub provider: Option<String>,
    /// Train split; needed by the paired-label mock.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "clean")]
    pub condition: ConditionArg,
    /// Prefix text for the noisy condition; the default distractor otherwise.
    #[arg(long)]
    pub noisy_prefix: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Tag written into every record, e.g. the training strategy.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Accept near-miss answers. Not for reported numbers.
    #[arg(long)]
    pub lenient: bool,
    /// Checkpoint path; defaults to `<out>.checkpoint.jsonl`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Clean-condition result files.
    #[arg(long, num_args = 1.., required = true)]
    pub clean: Vec<PathBuf>,
    /// Noisy-condition result files; enables the degradation table.
    #[arg(long, num_args = 1..)]
    pub noisy: Vec<PathBuf>,
    /// Metrics JSON; a text table is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
