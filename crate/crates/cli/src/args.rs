use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clmkl::eval::SelectionMetric;
use clmkl::kernel::{KernelSpec, Normalization};
use clmkl::train::Algorithm;

use crate::files::Named;

#[derive(Debug, Parser)]
#[command(
    name = "clmkl",
    version,
    about = "Localized multiple kernel learning on precomputed kernels"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate kernels on feature CSVs and store them as KMX1 files.
    ComputeKernels(ComputeKernelsArgs),
    /// Kernel k-means plus cluster likelihoods.
    Cluster(ClusterArgs),
    /// Train a model and write it as JSON.
    Train(TrainArgs),
    /// Decision values and labels for test points.
    Predict(PredictArgs),
    /// Accuracy and AUC of a predictions file.
    Evaluate(EvaluateArgs),
    /// Grid search with stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Rademacher complexity and generalization bounds.
    Bound(BoundArgs),
}

#[derive(Debug, Args)]
pub struct ComputeKernelsArgs {
    /// Training features: headerless CSV, one row per point.
    #[arg(long)]
    pub features: PathBuf,
    /// Test features; adds NAME.cross.kmx and NAME.diag.kmx per kernel.
    #[arg(long)]
    pub test_features: Option<PathBuf>,
    /// NAME=SPEC with SPEC one of linear, gaussian:W, poly:D[:C], chi2[:W].
    #[arg(long = "spec", value_name = "NAME=SPEC")]
    pub specs: Vec<Named<KernelSpec>>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Kernel inputs plus every training hyperparameter; unset flags fall back
/// to the config file, then to built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training Gram matrix as NAME=PATH (KMX1, or CSV by extension). Repeatable.
    #[arg(long = "kernel", value_name = "NAME=PATH")]
    pub kernels: Vec<Named<PathBuf>>,
    /// One target per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    pub algorithm: Option<Algorithm>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of clusters l.
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Target average evenness in (1/l, 1].
    #[arg(long, conflicts_with = "tau")]
    pub evenness: Option<f64>,
    /// Likelihood temperature (`inf` for hard assignments).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Tube width of the epsilon-insensitive loss.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub kmeans_max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_normalization)]
    pub normalization: Option<Normalization>,
    /// Kernel used for clustering and gating: a kernel name or `uniform`.
    #[arg(long)]
    pub cluster_kernel: Option<String>,
    #[arg(long)]
    pub lmkl_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Hinge,
    EpsInsensitive,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output CSV: index,cluster,c_0,...
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Model JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration CSV: model,iteration,primal,dual,gap,inner_iterations
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Test-versus-train matrix as NAME=PATH (n_test x n_train). Repeatable.
    #[arg(long = "cross", value_name = "NAME=PATH")]
    pub crosses: Vec<Named<PathBuf>>,
    /// Test self-similarities k(x, x) as NAME=PATH.
    #[arg(long = "diag", value_name = "NAME=PATH")]
    pub diags: Vec<Named<PathBuf>>,
    /// Output CSV: index,decision,label
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions CSV written by `predict`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Print AUC of the decision column (binary labels only).
    #[arg(long)]
    pub auc: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Comma-separated C values (default 10^-1, 10^-0.5, ..., 10^2).
    #[arg(long, value_delimiter = ',')]
    pub cs: Vec<f64>,
    /// Comma-separated p values (default: the configured p).
    #[arg(long, value_delimiter = ',')]
    pub ps: Vec<f64>,
    /// Comma-separated evenness targets.
    #[arg(
        long = "evenness-grid",
        value_delimiter = ',',
        conflicts_with = "evenness_range"
    )]
    pub evenness_grid: Vec<f64>,
    /// LO:HI:COUNT equally spaced evenness targets (default 0.4:0.7:8).
    #[arg(long)]
    pub evenness_range: Option<String>,
    /// Comma-separated cluster counts (default: the configured l).
    #[arg(long = "clusters-grid", value_delimiter = ',')]
    pub clusters_grid: Vec<usize>,
    #[arg(long, value_parser = parse_metric, default_value = "accuracy")]
    pub metric: SelectionMetric,
    /// Normalize kernels once on all points instead of per training split.
    #[arg(long)]
    pub global_normalization: bool,
    /// Output CSV, one row per (grid point, fold).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodSource {
    /// Calibrated soft likelihoods (evenness or tau).
    Soft,
    /// One-hot cluster membership.
    Hard,
    /// Every point spread evenly over all clusters.
    Uniform,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Trained CLMKL model: supplies normalization, likelihoods, p, and D.
    #[arg(long = "model")]
    pub trained: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LikelihoodSource::Soft)]
    pub likelihoods: LikelihoodSource,
    /// Hypothesis-class radius (estimated from --model if absent).
    #[arg(long)]
    pub d: Option<f64>,
    /// Kernel bound B (default: largest normalized diagonal entry).
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub loss_bound: f64,
    /// Loss Lipschitz constant; recorded only, it does not enter the bound.
    #[arg(long, default_value_t = 1.0)]
    pub lipschitz: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub empirical_risk: f64,
    /// Also write the report as a one-row CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: clmkl::Error| e.to_string())
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    s.parse().map_err(|e: clmkl::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<SelectionMetric, String> {
    s.parse().map_err(|e: clmkl::Error| e.to_string())
}
