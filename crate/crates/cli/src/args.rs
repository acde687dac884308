//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::label::Provider;
use crate::manifest::Split;

/// Environment variable naming the default run root.
pub const RUN_ROOT_ENV: &str = "HAAQI_RUN_ROOT";

#[derive(Debug, Parser)]
#[command(name = "haaqi", version, about = "Non-intrusive music quality prediction for hearing-aid listeners")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the one in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root under which run directories are created.
    #[arg(long, global = true, env = RUN_ROOT_ENV)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Corpus generation.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Attach quality labels to a manifest.
    Label(LabelArgs),
    /// Train the quality predictor.
    Train(TrainArgs),
    /// Distill a shallow student encoder from a trained teacher.
    Distill(DistillArgs),
    /// Evaluate a trained model on a labelled manifest.
    Eval(EvalArgs),
    /// Predictions across presentation levels.
    SplSweep(SplSweepArgs),
    /// Runtime benchmark of teacher and student pipelines.
    Bench(BenchArgs),
    /// Plot-ready CSVs for a trained model.
    PlotData(PlotDataArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Corpus(CorpusCommand::Build(_)) => "corpus-build",
            Command::Corpus(CorpusCommand::Audiograms) => "corpus-audiograms",
            Command::Label(_) => "label",
            Command::Train(_) => "train",
            Command::Distill(_) => "distill",
            Command::Eval(_) => "eval",
            Command::SplSweep(_) => "spl-sweep",
            Command::Bench(_) => "bench",
            Command::PlotData(_) => "plot-data",
        }
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum CorpusCommand {
    /// Degrade, amplify and write every manifest row.
    Build(BuildArgs),
    /// Write the audiogram bank.
    Audiograms,
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    /// Directory of clean WAV files; overrides `corpus.clean_dir`.
    #[arg(long)]
    pub clean_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderArg {
    #[value(alias = "proxy")]
    ProxyOracle,
    #[value(alias = "csv")]
    CsvImport,
}

impl From<ProviderArg> for Provider {
    fn from(p: ProviderArg) -> Self {
        match p {
            ProviderArg::ProxyOracle => Provider::ProxyOracle,
            ProviderArg::CsvImport => Provider::CsvImport,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LabelArgs {
    /// Manifest file or the directory holding it.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "proxy-oracle")]
    pub provider: ProviderArg,
    /// `clip_id,score` CSV for csv-import.
    #[arg(long, required_if_eq("provider", "csv-import"))]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Predictor weights to continue training from.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Override `train.max_steps`.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of a `train` run.
    #[arg(long)]
    pub model: PathBuf,
    /// Override `distill.steps`.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of a `train` or `distill` run.
    #[arg(long)]
    pub model: PathBuf,
    /// Splits to evaluate (default: both test splits).
    #[arg(long, value_delimiter = ',')]
    pub splits: Vec<Split>,
    #[arg(long)]
    pub quantiles: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SplSweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Presentation levels in dB SPL.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub levels: Vec<f64>,
    /// Number of clips (default `eval.spl_clips`).
    #[arg(long)]
    pub clips: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of a `train` run (teacher variant).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory of a `distill` run (student variant).
    #[arg(long)]
    pub distilled: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "teacher,student")]
    pub variants: Vec<VariantArg>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotDataArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Clip whose frame scores and attention map are exported (default: first test row).
    #[arg(long)]
    pub clip: Option<String>,
}
