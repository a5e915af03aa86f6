use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "creditlens",
    version,
    about = "Credit scorecards, challenger models and their explanations"
)]
pub struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write its artifacts.
    Train(TrainArgs),
    /// Train and test performance of one or more models.
    Evaluate(EvaluateArgs),
    /// Global or local explanation of one model.
    Explain(ExplainArgs),
    /// Champion-challenger comparison of two or more models.
    Compare(CompareArgs),
    /// HTTP scoring and explanation service.
    Serve(ServeArgs),
    /// Write a synthetic HELOC-style data set and its schema.
    Synth(SynthArgs),
}

/// Where the data comes from and how it is split. Unset values fall back to
/// the settings recorded when the (first) model was trained.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON schema: target name plus column declarations.
    #[arg(long)]
    pub schema: PathBuf,
    /// Seed for the split and every sampled step. [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Share of rows in the training partition. [default: 0.75]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Add a `NoValid<column>` indicator when the share of special-coded rows
    /// exceeds this value. [default: 0]
    #[arg(long, conflicts_with = "no_dummies")]
    pub dummy_threshold: Option<f64>,
    /// Do not derive special-value indicators.
    #[arg(long)]
    pub no_dummies: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Scorecard,
    Gbm,
    Rcs,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Scorecard => "scorecard",
            ModelKind::Gbm => "gbm",
            ModelKind::Rcs => "rcs",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Model name; defaults to the model kind.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Named boosting configuration (gbm_100, gbm_5000, gbm_10000, gbm_15000,
    /// gbm_50000); individual flags override it.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of boosting iterations (n.trees).
    #[arg(long)]
    pub n_trees: Option<usize>,
    /// Tree depth (interaction.depth).
    #[arg(long)]
    pub depth: Option<usize>,
    /// Learning rate (shrinkage).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Minimum rows per leaf (n.minobsinnode).
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Row subsample per tree (bag.fraction).
    #[arg(long)]
    pub bag_fraction: Option<f64>,
    /// Variables expanded with restricted cubic splines.
    #[arg(long, value_delimiter = ',')]
    pub spline: Vec<String>,
    /// Minimum marginal information value for forward selection.
    #[arg(long)]
    pub min_miv: Option<f64>,
    /// Rows kept in reference.csv for later attributions.
    #[arg(long, default_value_t = 500)]
    pub reference_cap: usize,
    /// Record a zero creation time so reruns are byte-identical.
    #[arg(long)]
    pub frozen_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Run directory or model JSON; repeat for several models.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub frozen_clock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Global,
    Local,
}

#[derive(Debug, Clone, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Run directory or model JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub level: Level,
    /// Zero-based row of the data file to explain (local level).
    #[arg(long)]
    pub obs: Option<usize>,
    /// Variables to profile: top by importance (global, default 5) or by
    /// attribution (local, default 3).
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Profile these variables instead of the top-k.
    #[arg(long, value_delimiter = ',')]
    pub variable: Vec<String>,
    /// Permutations per variable for importance.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Sampled orderings for SHAP.
    #[arg(long, default_value_t = 25)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    /// Training rows used as the attribution reference.
    #[arg(long, default_value_t = 500)]
    pub reference_cap: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub frozen_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Run directories or model JSON files, at least two.
    #[arg(long, required = true)]
    pub model: Vec<PathBuf>,
    /// Size of the importance sets whose overlap is reported.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Variables for the PD overlay; defaults to the first model's top-k.
    #[arg(long, value_delimiter = ',')]
    pub variable: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 101)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub frozen_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Directory of run directories and/or model JSON files.
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = creditlens_core::heloc::HELOC_ROWS)]
    pub rows: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub frozen_clock: bool,
}
