//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "calibra", version, about = "Post-hoc calibration of classifier outputs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a calibration method on a scores file and save the model.
    Fit(FitArgs),
    /// Calibrate a scores file with a saved model.
    Apply(ApplyArgs),
    /// Compute calibration metrics and a reliability report.
    Evaluate(EvaluateArgs),
    /// Write plot-ready reliability diagram data as CSV.
    Reliability(ReliabilityArgs),
    /// Generate miscalibrated synthetic scores with known ground truth.
    Synth(SynthArgs),
    /// Fit several methods on a calibration split and evaluate them on a test split.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Gpcalib,
    Platt,
    Isotonic,
    Beta,
    Bbq,
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CovArg {
    Diagonal,
    BlockDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Frequency,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Logits,
    Simplex,
}

#[derive(Debug, Clone, Args)]
pub struct GpArgs {
    /// Number of inducing points.
    #[arg(long = "M", default_value_t = 10)]
    pub num_inducing: usize,
    /// Latent prior mean: log, identity or affine:SLOPE,INTERCEPT. Defaults to
    /// log for simplex inputs and identity for logits.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long, value_enum, default_value_t = CovArg::Diagonal)]
    pub cov: CovArg,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    /// Relative ELBO change at which optimization stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(value_enum)]
    pub method: Method,
    pub scores: PathBuf,
    pub model: PathBuf,
    /// Calibrate each class against the rest (binary methods with K > 2).
    #[arg(long)]
    pub one_vs_all: bool,
    #[command(flatten)]
    pub gp: GpArgs,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    pub model: PathBuf,
    pub scores: PathBuf,
    pub out: PathBuf,
    /// Seed of the Monte-Carlo prediction.
    #[arg(long, env = "CALIBRA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Predict with the posterior mean instead of Monte-Carlo samples.
    #[arg(long)]
    pub mean_approx: bool,
    /// Monte-Carlo samples per prediction.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BinArgs {
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Frequency)]
    pub weighting: WeightingArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub scores: PathBuf,
    /// Write the full report (metrics and reliability arrays) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub bins: BinArgs,
    /// Also report ECE_p for this exponent.
    #[arg(long)]
    pub p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReliabilityArgs {
    pub scores: PathBuf,
    pub out: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub bins: usize,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("distortion").multiple(false))]
pub struct SynthArgs {
    pub out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Symmetric Dirichlet concentration of the true posteriors.
    #[arg(long, default_value_t = 1.0)]
    pub concentration: f64,
    /// Temperature distortion T (default 1, i.e. calibrated).
    #[arg(long, group = "distortion")]
    pub temperature: Option<f64>,
    /// Beta distortion a,b,c (K = 2 only).
    #[arg(long, group = "distortion")]
    pub beta: Option<String>,
    /// Tabulated latent distortion: JSON file {"xs": [...], "ys": [...]}.
    #[arg(long, group = "distortion")]
    pub latent: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Simplex)]
    pub kind: KindArg,
    #[arg(long, env = "CALIBRA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Ground-truth sidecar path (default OUT.truth.json).
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub calib: PathBuf,
    pub test: PathBuf,
    pub out: PathBuf,
    /// Comma-separated methods; empty evaluates only the uncalibrated scores.
    #[arg(long, default_value = "temperature,gpcalib")]
    pub methods: String,
    /// Monte-Carlo cross-validation runs over the calibration split.
    #[arg(long, default_value_t = 1)]
    pub folds: usize,
    /// Fraction of the calibration split drawn per run when folds > 1.
    #[arg(long, default_value_t = 0.8)]
    pub subsample: f64,
    #[arg(long, env = "CALIBRA_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Leave fit_seconds empty so reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub gp: GpArgs,
}
