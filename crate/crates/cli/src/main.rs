//! `gaitforge` command-line interface.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gaitforge::dataset::DEFAULT_SAMPLE_RATE;
use gaitforge::ErrorKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] gaitforge::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn core(e: impl Into<gaitforge::Error>) -> CliError {
        CliError::Core(e.into())
    }

    fn category(&self) -> (&'static str, u8) {
        match self {
            CliError::Usage(_) => ("usage", 2),
            CliError::Data(_) | CliError::Io { .. } => ("data", 3),
            CliError::Core(e) => match e.kind() {
                ErrorKind::Data => ("data", 3),
                ErrorKind::Numerical => ("numerical", 4),
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gaitforge",
    version,
    about = "Gait classification from ground reaction forces"
)]
pub struct Cli {
    /// Seed for every random choice (splits, folds, balancing, initialization).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel maps; defaults to the number of cores.
    #[arg(long, global = true, env = "GAITFORGE_JOBS")]
    pub jobs: Option<usize>,
    /// TOML configuration; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus on disk.
    Synth(SynthArgs),
    /// Load a dataset and report its counts.
    Load(LoadArgs),
    /// Extract the parameter table and the exclusion report.
    Extract(OutArgs),
    /// Per-class median, quartiles and range of every parameter.
    Stats(OutArgs),
    /// Build a feature representation and write its matrix and fitted model.
    Represent(RepresentArgs),
    /// LDA discriminativity grid over class partitions and feature columns.
    Discriminate(DiscriminateArgs),
    /// Train a classifier on the training split and evaluate it on the held-out subjects.
    Train(TrainArgs),
    /// Evaluate a stored model, or train and evaluate one cell from flags.
    Evaluate(EvaluateArgs),
    /// Run an experiment matrix.
    Bench(BenchArgs),
    /// Write the five time-normalized signals of each trial to CSV.
    ExportWaveforms(ExportArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Metadata CSV of a dataset on disk.
    #[arg(long, conflicts_with = "preset")]
    pub metadata: Option<PathBuf>,
    /// Recording directory; defaults to `recordings/` next to the metadata file.
    #[arg(long)]
    pub recordings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE)]
    pub sample_rate: f64,
    /// Generate this synthetic preset in memory instead of loading files.
    #[arg(long)]
    pub preset: Option<String>,
    /// Foot analysed for subjects without an affected side: left, right or first-contact.
    #[arg(long)]
    pub control_side: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in preset: paper-shape, calibrated or small.
    #[arg(long, default_value = "paper-shape", conflicts_with = "generator")]
    pub preset: String,
    /// Generator configuration TOML, instead of a preset.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LoadArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridChoice {
    Full,
    Quick,
}

#[derive(Debug, Args)]
pub struct RepresentArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// params, pca-f, pca-all5, pca-cop, pca-of-params, pca-of-params-minmax or pca-<signal>.
    #[arg(long = "type", default_value = "pca-all5")]
    pub kind: String,
    /// Retained-variance target: 0.90, 0.95 or 0.98.
    #[arg(long)]
    pub variance: Option<f64>,
    /// Column normalization of the output: none, zscore or minmax.
    #[arg(long, default_value = "none")]
    pub norm: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscriminateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// cv (patient-disjoint folds, the default) or resub (fit and score on the same rows).
    #[arg(long)]
    pub lda_eval: Option<String>,
    #[arg(long)]
    pub variance: Option<f64>,
    /// Also write the grid in long format (row, column, value).
    #[arg(long)]
    pub heatmap_data: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CellArgs {
    /// ncakh, nvgd or thigh-shank.
    #[arg(long, default_value = "ncakh")]
    pub task: String,
    /// Representation type, as for `represent --type`.
    #[arg(long, default_value = "pca-all5")]
    pub rep: String,
    /// Normalization of the final feature columns.
    #[arg(long, default_value = "zscore")]
    pub norm: String,
    /// svm-linear, svm-rbf, knn or mlp.
    #[arg(long, default_value = "svm-linear")]
    pub classifier: String,
    /// Comma-separated per-class SVM loss weights, in task label order.
    #[arg(long)]
    pub class_weights: Option<String>,
    /// none, one_session_per_person, equal_persons_per_class, both or male_only.
    #[arg(long, default_value = "none")]
    pub balance: String,
    #[arg(long)]
    pub variance: Option<f64>,
    #[arg(long, value_enum)]
    pub grid: Option<GridChoice>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub cell: CellArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `model.json` written by `train`; without it the cell flags are trained and evaluated.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Score every subject instead of only those held out by the stored split.
    #[arg(long)]
    pub all_subjects: bool,
    #[command(flatten)]
    pub cell: CellArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchTable {
    Table3,
    Table4,
    Merge,
    All,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub table: BenchTable,
    #[command(flatten)]
    pub data: DataArgs,
    /// Add the published reference values next to each cell.
    #[arg(long)]
    pub annotate_paper: bool,
    /// Reference annotations CSV replacing the bundled one.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub variance: Option<f64>,
    #[arg(long, value_enum)]
    pub grid: Option<GridChoice>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trial ids to export; all trials when omitted.
    #[arg(long = "trial")]
    pub trials: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = e.category();
            let body = serde_json::json!({ "error": kind, "message": e.to_string(), "exit_code": code });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
