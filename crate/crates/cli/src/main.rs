//! `pb`: Posterior Bootstrap sampling, diagnostics and experiments from the command line.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod exit;
mod groups;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "pb",
    version,
    about = "Posterior Bootstrap samplers and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw from a single-level sampler and write `draw,theta_1,…` plus a JSON summary.
    Sample(SampleArgs),
    /// Hierarchical Gamma–Poisson or Dirichlet-allocation draws.
    Hier(HierArgs),
    /// MLE, I_n, J_n, sandwich and prior-weight rules as JSON.
    Info(InfoArgs),
    /// Plug-in Edgeworth cumulants κ₁, κ₃ for a one-dimensional model.
    Edgeworth(EdgeworthArgs),
    /// Compare two draw files.
    Compare(CompareArgs),
    /// Monte-Carlo predictive risk E KL(p* ‖ p̂) for a Gaussian-location method.
    Risk(RiskArgs),
    /// Run a configured experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args, Clone)]
pub struct SolveArgs {
    /// Newton stopping tolerance on the gradient norm.
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    #[arg(long = "n-draws", short = 'N', default_value_t = 2000)]
    pub n_draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; all cores when omitted. Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Args, Clone)]
pub struct DataSource {
    /// Likelihood: gaussian[:VAR], mv-gaussian:C11,C12,…, poisson, poisson-regression,
    /// bernoulli, multinomial, gamma-shape:ALPHA.
    #[arg(long)]
    pub model: String,
    /// Headed numeric CSV, one observation per row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column for poisson-regression; the others are covariates.
    #[arg(long)]
    pub response: Option<String>,
    /// Prepend an intercept covariate.
    #[arg(long)]
    pub intercept: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleAlgorithm {
    Wlb,
    Pen,
    Pseudo,
    Wbb,
    Postpred,
}

#[derive(Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub source: DataSource,
    #[arg(long, value_enum)]
    pub algorithm: SampleAlgorithm,
    /// flat, normal:MEAN,VAR, gamma:SHAPE,RATE, dirichlet:ALPHA, logistic-beta:A,B.
    #[arg(long, default_value = "flat")]
    pub prior: String,
    /// Prior weight for `pen`: a number, a comma list, `star` or `bar`.
    #[arg(long, default_value = "1")]
    pub w0: String,
    /// Pseudo-sample prior strength c for `pseudo` and `postpred`.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Number of pseudo-samples T.
    #[arg(long = "T", default_value_t = 100)]
    pub t: usize,
    /// Prior scale for `wbb`.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_reg: f64,
    /// Posterior draws (`draw,theta_1,…`) feeding `postpred`; defaults to the
    /// conjugate posterior for Gaussian models under a normal prior.
    #[arg(long)]
    pub posterior: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "draws.csv")]
    pub out: PathBuf,
    /// Summary JSON path; printed to stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HierModel {
    GammaPoisson,
    DirichletAlloc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HierAlgorithm {
    Cond,
    #[value(name = "large-k", alias = "largeK")]
    LargeK,
}

#[derive(Args)]
pub struct HierArgs {
    #[arg(long, value_enum)]
    pub model: HierModel,
    /// `group,value` rows (gamma-poisson) or `group,count_1,…` rows (dirichlet-alloc).
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to `cond` for gamma-poisson and `large-k` for dirichlet-alloc.
    #[arg(long, value_enum)]
    pub algorithm: Option<HierAlgorithm>,
    /// Hyperprior shape α₀ (gamma-poisson).
    #[arg(long, default_value_t = 9.0)]
    pub alpha0: f64,
    /// Hyperprior rate β₀ (gamma-poisson).
    #[arg(long, default_value_t = 3.0)]
    pub beta0: f64,
    /// Known group-level shape α (gamma-poisson).
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Truncated-normal hyperprior scale τ (dirichlet-alloc).
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Pseudo-samples per group (dirichlet-alloc).
    #[arg(long = "T", default_value_t = 100)]
    pub t: usize,
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory for lambda_tilde.csv, lambda_bar.csv, theta_group_<id>.csv and summary.json.
    #[arg(long, default_value = "hier_out")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct InfoArgs {
    #[command(flatten)]
    pub source: DataSource,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Args)]
pub struct EdgeworthArgs {
    #[command(flatten)]
    pub source: DataSource,
    #[arg(long, default_value = "flat")]
    pub prior: String,
    #[arg(long, default_value_t = 1.0)]
    pub w0: f64,
    /// Also write `y,edgeworth_density,normal_density` rows to this CSV.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub grid_lo: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub grid_hi: f64,
    #[arg(long, default_value_t = 161)]
    pub grid_points: usize,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Ks,
    Bhattacharyya,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum)]
    pub metric: Metric,
}

#[derive(Args)]
pub struct RiskArgs {
    /// wlb, power:ETA or oracle.
    #[arg(long)]
    pub method: String,
    /// Paired comparison method; reports risk(method) − risk(baseline).
    #[arg(long)]
    pub baseline: Option<String>,
    /// Data-generating normal:MEAN,VAR.
    #[arg(long)]
    pub truth: String,
    /// Known variance of the fitted Gaussian-location model.
    #[arg(long, default_value_t = 1.0)]
    pub model_var: f64,
    /// Variance of the N(0, v) prior used by power posteriors.
    #[arg(long, default_value_t = 100.0)]
    pub prior_var: f64,
    /// Sample size per dataset.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Evaluation points per dataset.
    #[arg(long, default_value_t = 1000)]
    pub m_eval: usize,
    /// Draws per WLB mixture predictive.
    #[arg(long = "n-draws", default_value_t = 500)]
    pub n_draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub solve: SolveArgs,
}

#[derive(Args)]
pub struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long, required_unless_present = "init")]
    pub config: Option<PathBuf>,
    /// Print the default config for an experiment id and exit.
    #[arg(long, conflicts_with = "config")]
    pub init: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "n-draws")]
    pub n_draws: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Hier(a) => commands::hier(a),
        Command::Info(a) => commands::info(a),
        Command::Edgeworth(a) => commands::edgeworth(a),
        Command::Compare(a) => commands::compare(a),
        Command::Risk(a) => commands::risk(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    match res {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
