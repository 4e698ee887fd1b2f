//! Command-line front end: argument parsing, exit codes and dispatch.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use labelaug::augment::Strategy;

pub use config::{RunConfig, RunSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] labelaug::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Lib(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "labelaug", version, about = "Label-text augmentation for multi-task multi-label classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write artificial instances built from label-texts
    Augment(AugmentArgs),
    /// Train on the train split, tune the threshold and score the test split
    Train(TrainArgs),
    /// Score a model checkpoint
    Eval(EvalArgs),
    /// Train once per dropout rate and keep the best run
    Sweep(SweepArgs),
    /// Pretrain an encoder on a surrogate tagging corpus
    Pretrain(PretrainArgs),
    /// Train once per noise fraction and score each run on the test split
    NoiseSweep(NoiseSweepArgs),
    /// Print corpus counts
    Stats(StatsArgs),
    /// Render or merge evaluation reports
    Report(ReportArgs),
}

/// Inputs shared by the training subcommands. Flags override config keys.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Flat TOML configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Tokenizer vocabulary, one token per line
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    /// Artificial instances written by `augment`
    #[arg(long)]
    pub artificial: Option<PathBuf>,
    /// Checkpoint to start from
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Load only the encoder tensors of `--init`
    #[arg(long)]
    pub encoder_only: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub max_variants: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Model checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub split: Option<config::EvalSplit>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write the report as CSV here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Dropout rates: a comma-separated list or a file holding one
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Sweep table CSV
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Surrogate corpus, JSON Lines `{id, text, labels}`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Flat TOML with encoder shape and pretraining keys
    #[arg(long, alias = "config")]
    pub encoder_config: Option<PathBuf>,
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    /// Encoder checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct NoiseSweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Noise fractions, comma-separated
    #[arg(long)]
    pub fractions: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Curve CSV
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report CSVs written by `eval` or `train`
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Row names for a merged grid, comma-separated; file stems otherwise
    #[arg(long)]
    pub names: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Table,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse::<Strategy>().map_err(|e| e.to_string())
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
