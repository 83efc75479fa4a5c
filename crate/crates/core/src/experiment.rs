//! Config-driven experiment runner for the synthetic studies.
//!
//! Replicate r draws its data and sampler seeds from
//! `derive_seed(derive_seed(seed, purpose, r), index, 0)`, so results do not
//! depend on scheduling and re-running a config reproduces `results.csv`
//! byte for byte.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    bayesbag_draws, bhattacharyya_gaussian, conjugate_posterior, gaussian_power_posterior,
    ks_dissimilarity, mc_risk_difference, sampler_draws, ConjugateKind, GammaGaussianPosterior,
    GaussianTruth, PowerPosteriorPredictive, WlbPredictive,
};
use crate::edgeworth::{
    bartlett_residual_with, density_grid, estimate_edgeworth_inputs, kappa_coeffs,
};
use crate::error::{Error, Result};
use crate::hierarchical::{
    dirichlet_moments, lambda_sandwich, sample_dirichlet_allocation, sample_hier_large_k,
    sample_hier_penalized, AllocationData, Group, HierDrawSet, HierarchicalSpec,
};
use crate::info::{eigenvalues, empirical_info, risk_difference, w0_bar, w0_star};
use crate::io::{write_draws_csv, write_hier_draws, write_json};
use crate::model::{
    Dataset, DirichletConditional, GammaPoissonConditional, GammaPrior, GammaRateConditional,
    GammaShapeKnown, GaussianLocation, GaussianPrior, MvGaussianMean, ParamVector, ParametricModel,
    PoissonRate, PoissonRegression,
};
use crate::rng::{derive_seed, RngStream};
use crate::samplers::{
    run_indexed, sample_pb_penalized, sample_pb_pseudo, sample_wlb, Algorithm, DrawSet, Hyper,
    ParamSampler, RunConfig,
};
use crate::solve::{mle, PenaltyWeight, SolveConfig};
use crate::synthetic::{
    count_regression, dirichlet_allocation, gamma_poisson_groups, mv_normal, toy1d, Dispersion,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Share of failed replicates above which a run counts as failed.
pub const MAX_FAILED_FRACTION: f64 = 0.1;

const PURPOSE_DATA: u64 = 0xDA7A;
const PURPOSE_SAMPLE: u64 = 0x5A3;
const PURPOSE_REFERENCE: u64 = 0x4EF;

/// Top-level experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Replicate datasets.
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Posterior draws N per method and replicate.
    #[serde(default = "default_n_draws")]
    pub n_draws: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Thread count; absent uses all cores.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub solve: SolveConfig,
    pub experiment: Experiment,
}

fn default_seed() -> u64 {
    1
}
fn default_reps() -> usize {
    20
}
fn default_n_draws() -> usize {
    2000
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("pb_output")
}

impl ExperimentConfig {
    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// A config with every default for the given experiment.
    pub fn with_experiment(experiment: Experiment) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            reps: default_reps(),
            n_draws: default_n_draws(),
            output_dir: default_output_dir(),
            workers: None,
            solve: SolveConfig::default(),
            experiment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.reps == 0 || self.n_draws == 0 {
            return Err(Error::Config("reps and n_draws must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        self.solve.validate()?;
        self.experiment.validate()
    }
}

/// Experiment id with its scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Experiment {
    Toy1d(Toy1dParams),
    Toy2d(Toy2dParams),
    PoissonDispersion(PoissonDispersionParams),
    GammaPoissonHier(GammaPoissonHierParams),
    DirichletAlloc(DirichletAllocParams),
    RiskTheorem1(RiskParams),
    EdgeworthReport(EdgeworthParams),
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Toy1d(_) => "toy1d",
            Experiment::Toy2d(_) => "toy2d",
            Experiment::PoissonDispersion(_) => "poisson_dispersion",
            Experiment::GammaPoissonHier(_) => "gamma_poisson_hier",
            Experiment::DirichletAlloc(_) => "dirichlet_alloc",
            Experiment::RiskTheorem1(_) => "risk_theorem1",
            Experiment::EdgeworthReport(_) => "edgeworth_report",
        }
    }

    /// The experiment with default parameters, by id.
    pub fn default_for(id: &str) -> Result<Self> {
        Ok(match id {
            "toy1d" => Experiment::Toy1d(Default::default()),
            "toy2d" => Experiment::Toy2d(Default::default()),
            "poisson_dispersion" => Experiment::PoissonDispersion(Default::default()),
            "gamma_poisson_hier" => Experiment::GammaPoissonHier(Default::default()),
            "dirichlet_alloc" => Experiment::DirichletAlloc(Default::default()),
            "risk_theorem1" => Experiment::RiskTheorem1(Default::default()),
            "edgeworth_report" => Experiment::EdgeworthReport(Default::default()),
            other => return Err(Error::Config(format!("unknown experiment id {other:?}"))),
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{}: {m}", self.id())));
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self {
            Experiment::Toy1d(p) => {
                if p.sigma2.is_empty() || !p.sigma2.iter().all(|&v| pos(v)) {
                    return bad("sigma2 values must be positive");
                }
                if p.w0_grid.is_empty() || !p.w0_grid.iter().all(|&v| v >= 0.0 && v.is_finite()) {
                    return bad("w0_grid must be non-empty and non-negative");
                }
                if p.n == 0
                    || !pos(p.prior_shape)
                    || p.prior_shape < 1.0
                    || !pos(p.prior_rate)
                    || p.bags == 0
                {
                    return bad("need n ≥ 1, prior_shape ≥ 1, prior_rate > 0, bags ≥ 1");
                }
            }
            Experiment::Toy2d(p) => {
                for m in [&p.sigma1, &p.sigma2, &p.prior_cov] {
                    if m.len() != 2 || m.iter().any(|r| r.len() != 2) {
                        return bad("covariances must be 2×2");
                    }
                }
                if p.n == 0
                    || !pos(p.eta)
                    || p.bags == 0
                    || p.t == 0
                    || !p.c_grid.iter().all(|&c| pos(c))
                {
                    return bad("need n ≥ 1, η > 0, bags ≥ 1, T ≥ 1 and positive c values");
                }
            }
            Experiment::PoissonDispersion(p) => {
                if p.beta.len() < 2 || p.n == 0 || !pos(p.prior_var) || p.scenarios.is_empty() {
                    return bad(
                        "need an intercept and a slope, n ≥ 1, prior_var > 0 and a scenario",
                    );
                }
            }
            Experiment::GammaPoissonHier(p) => {
                if p.theta.len() < 2 || !p.theta.iter().all(|&v| pos(v)) || p.n_k == 0 {
                    return bad("need at least two positive group rates and n_k ≥ 1");
                }
                if !(pos(p.alpha0) && pos(p.beta0) && pos(p.alpha))
                    || p.nb_size.is_some_and(|s| !pos(s))
                {
                    return bad("α₀, β₀, α and the NB size must be positive");
                }
                if p.algorithms.is_empty() {
                    return bad("no algorithms selected");
                }
            }
            Experiment::DirichletAlloc(p) => {
                if p.lambda.len() < 2
                    || !p.lambda.iter().all(|&v| pos(v))
                    || p.k < 2
                    || p.n_k == 0
                    || p.t == 0
                {
                    return bad("need ≥ 2 positive λ entries, K ≥ 2, n_k ≥ 1 and T ≥ 1");
                }
                if p.tau.is_empty() || !p.tau.iter().all(|&v| pos(v)) {
                    return bad("tau values must be positive");
                }
            }
            Experiment::RiskTheorem1(p) => {
                if !(pos(p.sigma2_true) && pos(p.model_var) && pos(p.eta) && pos(p.prior_var)) {
                    return bad("variances and η must be positive");
                }
                if p.n == 0
                    || p.reps < 2
                    || p.m_eval == 0
                    || p.wlb_draws < crate::diagnostics::MIN_MIXTURE_DRAWS
                {
                    return bad("need n ≥ 1, reps ≥ 2, m_eval ≥ 1 and wlb_draws ≥ 500");
                }
            }
            Experiment::EdgeworthReport(p) => {
                let shapes = [
                    p.model_alpha,
                    p.rate,
                    p.prior_shape,
                    p.prior_rate,
                    p.data_alpha.unwrap_or(1.0),
                ];
                if !shapes.iter().all(|&v| pos(v))
                    || p.n == 0
                    || p.bartlett_m < 2
                    || p.grid_points < 2
                {
                    return bad(
                        "shapes and rates must be positive, n ≥ 1, bartlett_m ≥ 2, grid_points ≥ 2",
                    );
                }
                if !(p.grid_lo < p.grid_hi) || !(p.w0 >= 0.0) {
                    return bad("need grid_lo < grid_hi and w0 ≥ 0");
                }
            }
        }
        Ok(())
    }
}

/// One-dimensional Gaussian location model with unit variance against
/// N(10, σ²) data, Gamma prior, PB over a w0 grid scored by KS distance to
/// the correct-variance posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toy1dParams {
    pub sigma2: Vec<f64>,
    pub n: usize,
    pub w0_grid: Vec<f64>,
    pub prior_shape: f64,
    pub prior_rate: f64,
    /// Also run WLB, misspecified Bayes, BayesBag and PB with w0*.
    pub compare: bool,
    pub bags: usize,
}

impl Default for Toy1dParams {
    fn default() -> Self {
        Self {
            sigma2: vec![0.6, 1.0, 2.8],
            n: 200,
            w0_grid: (1..=20).map(|i| round9(0.2 * i as f64)).collect(),
            prior_shape: 5.0,
            prior_rate: 3.0,
            compare: true,
            bags: 50,
        }
    }
}

/// Two-dimensional Gaussian mean with model covariance Σ₁ against N(0, Σ₂) data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toy2dParams {
    pub n: usize,
    pub sigma1: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Vec<Vec<f64>>,
    pub eta: f64,
    /// BayesBag resample size; absent uses n.
    pub bayesbag_b: Option<usize>,
    pub bags: usize,
    pub c_grid: Vec<f64>,
    pub t: usize,
}

impl Default for Toy2dParams {
    fn default() -> Self {
        let m = |a: DMatrix<f64>| (0..2).map(|i| vec![a[(i, 0)], a[(i, 1)]]).collect();
        Self {
            n: 200,
            sigma1: m(crate::synthetic::toy2d_sigma1()),
            sigma2: m(crate::synthetic::toy2d_sigma2()),
            prior_mean: crate::synthetic::TOY2D_PRIOR_MEAN.to_vec(),
            prior_cov: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            eta: 0.5,
            bayesbag_b: None,
            bags: 50,
            c_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            t: 100,
        }
    }
}

/// Poisson regression on over- and under-dispersed synthetic counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonDispersionParams {
    pub n: usize,
    /// Coefficients including the intercept.
    pub beta: Vec<f64>,
    /// Variance of the isotropic N(0, v) coefficient prior.
    pub prior_var: f64,
    pub scenarios: Vec<Dispersion>,
}

impl Default for PoissonDispersionParams {
    fn default() -> Self {
        Self {
            n: 500,
            beta: vec![0.5, 0.3, -0.2],
            prior_var: 100.0,
            scenarios: vec![
                Dispersion::Over { size: 2.0 },
                Dispersion::Under { n_trials: 5 },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierAlgorithm {
    /// Exact λ-conditional sampler.
    Cond,
    /// Weighted λ-level optimization.
    LargeK,
}

/// Poisson groups with Gamma(α, λ) rates and a Gamma(α₀, β₀) hyperprior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaPoissonHierParams {
    pub theta: Vec<f64>,
    pub n_k: usize,
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha: f64,
    /// Negative-binomial size for misspecified counts; absent gives Poisson data.
    pub nb_size: Option<f64>,
    pub algorithms: Vec<HierAlgorithm>,
}

impl Default for GammaPoissonHierParams {
    fn default() -> Self {
        Self {
            theta: vec![1.0, 2.0, 4.0],
            n_k: 100,
            alpha0: 9.0,
            beta0: 3.0,
            alpha: 2.0,
            nb_size: None,
            algorithms: vec![HierAlgorithm::Cond, HierAlgorithm::LargeK],
        }
    }
}

/// Multinomial groups with Dirichlet(λ) proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirichletAllocParams {
    pub lambda: Vec<f64>,
    pub k: usize,
    pub n_k: u64,
    pub tau: Vec<f64>,
    pub t: usize,
}

impl Default for DirichletAllocParams {
    fn default() -> Self {
        Self {
            lambda: vec![12.0, 12.0, 12.0, 10.0, 10.0, 10.0],
            k: 300,
            n_k: 1000,
            tau: vec![10.0, 1.0, 0.1],
            t: 100,
        }
    }
}

/// Paired risk of the η-power posterior against the WLB predictive for a
/// Gaussian location model under N(0, σ²_true) data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskParams {
    pub sigma2_true: f64,
    pub model_var: f64,
    pub eta: f64,
    pub n: usize,
    pub reps: usize,
    pub m_eval: usize,
    pub wlb_draws: usize,
    pub prior_var: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            sigma2_true: 1.5,
            model_var: 1.0,
            eta: 0.5,
            n: 50,
            reps: 500,
            m_eval: 1000,
            wlb_draws: 500,
            prior_var: 100.0,
        }
    }
}

/// Edgeworth inputs, cumulants and Bartlett residual for a Gamma(α, rate)
/// model; `data_alpha` different from `model_alpha` misspecifies the shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeworthParams {
    pub model_alpha: f64,
    pub rate: f64,
    pub data_alpha: Option<f64>,
    pub n: usize,
    pub w0: f64,
    pub prior_shape: f64,
    pub prior_rate: f64,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub bartlett_m: usize,
}

impl Default for EdgeworthParams {
    fn default() -> Self {
        Self {
            model_alpha: 2.0,
            rate: 1.0,
            data_alpha: None,
            n: 200,
            w0: 1.0,
            prior_shape: 2.0,
            prior_rate: 1.0,
            grid_lo: -4.0,
            grid_hi: 4.0,
            grid_points: 161,
            bartlett_m: 100_000,
        }
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Grid label: the value rounded to nine decimals.
pub fn label(x: f64) -> String {
    format!("{}", round9(x))
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Synthetic data for one replicate and scenario.
#[derive(Debug, Clone)]
pub enum SyntheticData {
    Single(Dataset),
    Groups(Vec<Group>),
    Allocation(AllocationData),
}

impl SyntheticData {
    fn single(self) -> Dataset {
        match self {
            SyntheticData::Single(d) => d,
            _ => unreachable!("experiment produces a single dataset"),
        }
    }
}

/// Deterministic dataset for `scenario` (the σ² index for toy1d, the
/// dispersion index for poisson_dispersion, otherwise 0).
pub fn generate_synthetic(exp: &Experiment, scenario: usize, seed: u64) -> Result<SyntheticData> {
    let out_of_range = || Error::Config(format!("{}: scenario {scenario} out of range", exp.id()));
    Ok(match exp {
        Experiment::Toy1d(p) => SyntheticData::Single(toy1d(
            *p.sigma2.get(scenario).ok_or_else(out_of_range)?,
            p.n,
            seed,
        )?),
        Experiment::Toy2d(p) => SyntheticData::Single(mv_normal(
            &DVector::zeros(2),
            &matrix(&p.sigma2),
            p.n,
            seed,
        )?),
        Experiment::PoissonDispersion(p) => SyntheticData::Single(count_regression(
            &p.beta,
            p.n,
            *p.scenarios.get(scenario).ok_or_else(out_of_range)?,
            seed,
        )?),
        Experiment::GammaPoissonHier(p) => {
            SyntheticData::Groups(gamma_poisson_groups(&p.theta, p.n_k, p.nb_size, seed)?)
        }
        Experiment::DirichletAlloc(p) => {
            SyntheticData::Allocation(dirichlet_allocation(&p.lambda, p.k, p.n_k, seed)?)
        }
        Experiment::RiskTheorem1(p) => SyntheticData::Single(toy1d(p.sigma2_true, p.n, seed)?),
        Experiment::EdgeworthReport(p) => {
            let gen = GammaShapeKnown::new(p.data_alpha.unwrap_or(p.model_alpha));
            let theta = DVector::from_element(1, p.rate);
            let mut rng = RngStream::new(seed, 0).rng();
            let xs: Vec<f64> = (0..p.n)
                .filter_map(|_| gen.sample_obs(&theta, &mut rng).map(|v| v[0]))
                .collect();
            SyntheticData::Single(Dataset::from_column(&xs))
        }
    })
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub scenario: String,
    pub method: String,
    pub hyper: String,
    pub metric: String,
    pub value: f64,
}

/// Seeds, draw count and solver settings for one replicate.
#[derive(Debug, Clone, Copy)]
pub struct RepContext {
    pub replicate: usize,
    pub master_seed: u64,
    pub n_draws: usize,
    pub solve: SolveConfig,
    pub workers: Option<usize>,
    /// Retain draw sets and auxiliary files for writing.
    pub keep_draws: bool,
}

impl RepContext {
    pub fn new(replicate: usize, master_seed: u64, n_draws: usize) -> Self {
        Self {
            replicate,
            master_seed,
            n_draws,
            solve: SolveConfig::default(),
            workers: None,
            keep_draws: false,
        }
    }

    fn seed(&self, purpose: u64, index: u64) -> u64 {
        derive_seed(
            derive_seed(self.master_seed, purpose, self.replicate as u64),
            index,
            0,
        )
    }

    pub fn data_seed(&self, scenario: usize) -> u64 {
        self.seed(PURPOSE_DATA, scenario as u64)
    }

    fn run(&self, index: u64) -> RunConfig {
        RunConfig {
            n_draws: self.n_draws,
            seed: self.seed(PURPOSE_SAMPLE, index),
            solve: self.solve,
            workers: self.workers,
        }
    }

    fn reference_seed(&self, index: u64) -> u64 {
        self.seed(PURPOSE_REFERENCE, index)
    }
}

/// Rows, draws and auxiliary files produced by one replicate.
#[derive(Debug, Clone, Default)]
pub struct RepOutput {
    pub rows: Vec<ResultRow>,
    pub draws: Vec<(String, DrawSet)>,
    pub hier_draws: Vec<(String, HierDrawSet)>,
    /// (file name, contents) written next to the results.
    pub files: Vec<(String, String)>,
    keep: bool,
    replicate: usize,
}

impl RepOutput {
    fn new(ctx: &RepContext) -> Self {
        Self {
            keep: ctx.keep_draws,
            replicate: ctx.replicate,
            ..Default::default()
        }
    }

    fn push(&mut self, scenario: &str, method: &str, hyper: &str, metric: &str, value: f64) {
        self.rows.push(ResultRow {
            replicate: self.replicate,
            scenario: scenario.into(),
            method: method.into(),
            hyper: hyper.into(),
            metric: metric.into(),
            value,
        });
    }

    fn keep(&mut self, name: String, d: &DrawSet) {
        if self.keep {
            self.draws.push((name, d.clone()));
        }
    }

    /// Value of the first row matching every field but the replicate.
    pub fn value(&self, scenario: &str, method: &str, hyper: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.scenario == scenario
                    && r.method == method
                    && r.hyper == hyper
                    && r.metric == metric
            })
            .map(|r| r.value)
    }
}

fn draw_name(scenario: &str, method: &str, hyper: &str) -> String {
    let clean = |s: &str| s.replace(['=', '/', ' '], "_");
    if hyper.is_empty() {
        format!("{}__{}", clean(scenario), clean(method))
    } else {
        format!("{}__{}__{}", clean(scenario), clean(method), clean(hyper))
    }
}

/// Records a draw set's distance to the reference under `metric`.
fn score(
    out: &mut RepOutput,
    scenario: &str,
    method: &str,
    hyper: &str,
    draws: &DrawSet,
    reference: &DrawSet,
    metric: &str,
) -> Result<()> {
    let v = match metric {
        "ks" => ks_dissimilarity(draws, reference)?,
        _ => bhattacharyya_gaussian(draws, reference)?,
    };
    out.push(scenario, method, hyper, metric, v);
    out.push(
        scenario,
        method,
        hyper,
        "nonconverged",
        draws.nonconverged.len() as f64,
    );
    out.keep(draw_name(scenario, method, hyper), draws);
    Ok(())
}

/// Draws from a sampler closure, used for exact reference posteriors.
struct FnSampler<F: Fn(&mut dyn RngCore) -> DVector<f64> + Send + Sync>(F);

impl<F: Fn(&mut dyn RngCore) -> DVector<f64> + Send + Sync> ParamSampler for FnSampler<F> {
    fn sample_param(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        Some((self.0)(rng))
    }
}

pub fn toy1d_scenario(sigma2: f64) -> String {
    format!("sigma2={}", label(sigma2))
}

/// One toy1d replicate: KS of PB-penalized draws over the w0 grid against the
/// Gamma-prior posterior with the true variance. All grid points share one
/// seed, so their weights are common random numbers.
pub fn toy1d_replicate(exp: &Experiment, ctx: &RepContext) -> Result<RepOutput> {
    let Experiment::Toy1d(p) = exp else {
        return Err(Error::Config("expected toy1d".into()));
    };
    let mut out = RepOutput::new(ctx);
    let model = GaussianLocation::new(1.0);
    let prior = GammaPrior::scalar(p.prior_shape, p.prior_rate)?;
    for (si, &s2) in p.sigma2.iter().enumerate() {
        let scen = toy1d_scenario(s2);
        let data = generate_synthetic(exp, si, ctx.data_seed(si))?.single();
        let truth = GammaGaussianPosterior::new(p.prior_shape, p.prior_rate, &data, s2, 1.0)?;
        let reference = sampler_draws(
            &truth,
            ctx.n_draws,
            ctx.reference_seed(si as u64),
            Algorithm::Bayes,
            Hyper::None,
        )?;
        out.keep(draw_name(&scen, "reference", ""), &reference);
        let run = ctx.run(si as u64);
        for &w0 in &p.w0_grid {
            let d = sample_pb_penalized(&model, &data, &prior, &PenaltyWeight::Scalar(w0), &run)?;
            score(&mut out, &scen, "pb_pen", &label(w0), &d, &reference, "ks")?;
        }
        if p.compare {
            let theta_hat = mle(&model, &data, &ctx.solve)?;
            let ws = w0_star(&empirical_info(&model, &data, &theta_hat)?)?[0];
            out.push(&scen, "info", "", "w0_star", ws);
            let d = sample_pb_penalized(&model, &data, &prior, &PenaltyWeight::Scalar(ws), &run)?;
            score(&mut out, &scen, "pb_pen", "w0_star", &d, &reference, "ks")?;
            let d = sample_wlb(&model, &data, &run)?;
            score(&mut out, &scen, "wlb", "", &d, &reference, "ks")?;
            let bayes = GammaGaussianPosterior::new(p.prior_shape, p.prior_rate, &data, 1.0, 1.0)?;
            let d = sampler_draws(&bayes, ctx.n_draws, run.seed, Algorithm::Bayes, Hyper::None)?;
            score(&mut out, &scen, "bayes", "", &d, &reference, "ks")?;
            let (shape, rate) = (p.prior_shape, p.prior_rate);
            let d = bayesbag_draws(&data, data.n(), p.bags, ctx.n_draws, run.seed, &|bag| {
                Ok(
                    Box::new(GammaGaussianPosterior::new(shape, rate, bag, 1.0, 1.0)?)
                        as Box<dyn ParamSampler>,
                )
            })?;
            score(
                &mut out,
                &scen,
                "bayesbag",
                &format!("b={},bags={}", data.n(), p.bags),
                &d,
                &reference,
                "ks",
            )?;
        }
    }
    Ok(out)
}

pub const TOY2D_SCENARIO: &str = "toy2d";

/// One toy2d replicate: Bhattacharyya distance of each method to the
/// conjugate posterior under the data-generating covariance Σ₂.
pub fn toy2d_replicate(exp: &Experiment, ctx: &RepContext) -> Result<RepOutput> {
    let Experiment::Toy2d(p) = exp else {
        return Err(Error::Config("expected toy2d".into()));
    };
    let mut out = RepOutput::new(ctx);
    let scen = TOY2D_SCENARIO;
    let data = generate_synthetic(exp, 0, ctx.data_seed(0))?.single();
    let model = MvGaussianMean::new(matrix(&p.sigma1))?;
    let prior = GaussianPrior::new(
        DVector::from_column_slice(&p.prior_mean),
        matrix(&p.prior_cov),
    )?;
    let truth = gaussian_power_posterior(&matrix(&p.sigma2), &prior, &data, 1.0)?;
    let reference = sampler_draws(
        &truth,
        ctx.n_draws,
        ctx.reference_seed(0),
        Algorithm::Bayes,
        Hyper::None,
    )?;
    out.keep(draw_name(scen, "reference", ""), &reference);
    let metric = "bhattacharyya";

    let theta_hat = mle(&model, &data, &ctx.solve)?;
    let info = empirical_info(&model, &data, &theta_hat)?;
    let ws = w0_star(&info)?;
    let wb = w0_bar(&info)?;
    for (j, v) in ws.iter().enumerate() {
        out.push(scen, "info", "", &format!("w0_star_{}", j + 1), *v);
    }
    out.push(scen, "info", "", "w0_bar", wb);

    let d = conjugate_posterior(
        ConjugateKind::Bayes,
        &model,
        &prior,
        &data,
        ctx.n_draws,
        ctx.run(1).seed,
    )?;
    score(&mut out, scen, "bayes", "", &d, &reference, metric)?;
    let d = conjugate_posterior(
        ConjugateKind::Power(p.eta),
        &model,
        &prior,
        &data,
        ctx.n_draws,
        ctx.run(2).seed,
    )?;
    score(
        &mut out,
        scen,
        "power",
        &format!("eta={}", label(p.eta)),
        &d,
        &reference,
        metric,
    )?;
    let b = p.bayesbag_b.unwrap_or(data.n());
    let kind = ConjugateKind::BayesBag { b, bags: p.bags };
    let d = conjugate_posterior(kind, &model, &prior, &data, ctx.n_draws, ctx.run(3).seed)?;
    score(
        &mut out,
        scen,
        "bayesbag",
        &format!("b={b},bags={}", p.bags),
        &d,
        &reference,
        metric,
    )?;
    for &c in &p.c_grid {
        let d = sample_pb_pseudo(&model, &data, &prior, c, p.t, &ctx.run(4))?;
        score(
            &mut out,
            scen,
            "pb_pseudo",
            &format!("c={},T={}", label(c), p.t),
            &d,
            &reference,
            metric,
        )?;
    }
    let run = ctx.run(5);
    let d = sample_pb_penalized(
        &model,
        &data,
        &prior,
        &PenaltyWeight::Vector(ws.iter().copied().collect()),
        &run,
    )?;
    score(&mut out, scen, "pb_pen", "w0_star", &d, &reference, metric)?;
    let d = sample_pb_penalized(&model, &data, &prior, &PenaltyWeight::Scalar(wb), &run)?;
    score(&mut out, scen, "pb_pen", "w0_bar", &d, &reference, metric)?;
    Ok(out)
}

pub fn dispersion_scenario(d: &Dispersion) -> String {
    match d {
        Dispersion::Equi => "equi".into(),
        Dispersion::Over { size } => format!("over_size={}", label(*size)),
        Dispersion::Under { n_trials } => format!("under_trials={n_trials}"),
    }
}

/// One dispersion replicate: per coefficient, the PB(w0*) draw standard
/// deviation over the Laplace standard deviation √(diag J_n⁻¹ / n).
pub fn poisson_dispersion_replicate(exp: &Experiment, ctx: &RepContext) -> Result<RepOutput> {
    let Experiment::PoissonDispersion(p) = exp else {
        return Err(Error::Config("expected poisson_dispersion".into()));
    };
    let mut out = RepOutput::new(ctx);
    let dim = p.beta.len();
    let model = PoissonRegression::new(dim);
    let prior = GaussianPrior::isotropic(DVector::zeros(dim), p.prior_var)?;
    for (si, disp) in p.scenarios.iter().enumerate() {
        let scen = dispersion_scenario(disp);
        let data = generate_synthetic(exp, si, ctx.data_seed(si))?.single();
        let theta_hat = mle(&model, &data, &ctx.solve)?;
        let info = empirical_info(&model, &data, &theta_hat)?;
        let ws = w0_star(&info)?;
        let jinv = crate::linalg::pd_inverse(&info.j_n, "J_n")?;
        let d = sample_pb_penalized(
            &model,
            &data,
            &prior,
            &PenaltyWeight::Vector(ws.iter().copied().collect()),
            &ctx.run(si as u64),
        )?;
        let cov = d.cov();
        for j in 0..dim {
            let laplace = (jinv[(j, j)] / data.n() as f64).sqrt();
            out.push(
                &scen,
                "pb_pen",
                "w0_star",
                &format!("sd_ratio_{}", j + 1),
                cov[(j, j)].sqrt() / laplace,
            );
            out.push(&scen, "info", "", &format!("w0_star_{}", j + 1), ws[j]);
        }
        out.push(
            &scen,
            "pb_pen",
            "w0_star",
            "nonconverged",
            d.nonconverged.len() as f64,
        );
        out.keep(draw_name(&scen, "pb_pen", "w0_star"), &d);
    }
    Ok(out)
}

pub const GAMMA_POISSON_SCENARIO: &str = "gamma_poisson";

/// The hierarchical Gamma–Poisson spec for the given groups.
pub fn gamma_poisson_spec(
    p: &GammaPoissonHierParams,
    groups: Vec<Group>,
) -> Result<HierarchicalSpec> {
    Ok(HierarchicalSpec::new(
        groups,
        Arc::new(PoissonRate::new()),
        Arc::new(GammaRateConditional { alpha: p.alpha }),
    )?
    .with_hyperprior(Arc::new(GammaPrior::scalar(p.alpha0, p.beta0)?))?
    .with_conditional(Arc::new(GammaPoissonConditional {
        alpha0: p.alpha0,
        beta0: p.beta0,
        alpha: p.alpha,
    })))
}

/// N draws of λ from Gamma(α₀ + Kα, β₀ + Σθ*_k).
pub fn gamma_poisson_exact_lambda(
    p: &GammaPoissonHierParams,
    n_draws: usize,
    seed: u64,
) -> Result<DrawSet> {
    let cond = GammaPoissonConditional {
        alpha0: p.alpha0,
        beta0: p.beta0,
        alpha: p.alpha,
    };
    let thetas: Vec<DVector<f64>> = p
        .theta
        .iter()
        .map(|&t| DVector::from_element(1, t))
        .collect();
    use crate::model::LambdaConditional;
    let s = FnSampler(|rng: &mut dyn RngCore| cond.sample(&thetas, rng));
    sampler_draws(&s, n_draws, seed, Algorithm::Bayes, Hyper::None)
}

/// One Gamma–Poisson replicate: λ̃ against the exact λ-posterior given θ*.
pub fn gamma_poisson_replicate(exp: &Experiment, ctx: &RepContext) -> Result<RepOutput> {
    let Experiment::GammaPoissonHier(p) = exp else {
        return Err(Error::Config("expected gamma_poisson_hier".into()));
    };
    let mut out = RepOutput::new(ctx);
    let scen = GAMMA_POISSON_SCENARIO;
    let SyntheticData::Groups(groups) = generate_synthetic(exp, 0, ctx.data_seed(0))? else {
        unreachable!()
    };
    let spec = gamma_poisson_spec(p, groups)?;
    let exact = gamma_poisson_exact_lambda(p, ctx.n_draws, ctx.reference_seed(0))?;
    out.keep(draw_name(scen, "exact_lambda", ""), &exact);
    for (ai, alg) in p.algorithms.iter().enumerate() {
        let run = ctx.run(ai as u64);
        let (method, h) = match alg {
            HierAlgorithm::Cond => ("hier_cond", sample_hier_penalized(&spec, None, &run)?),
            HierAlgorithm::LargeK => (
                "hier_large_k",
                sample_hier_large_k(&spec, None, None, &run)?,
            ),
        };
        let lt = h.lambda_tilde_set();
        out.push(scen, method, "", "ks_exact", ks_dissimilarity(&lt, &exact)?);
        out.push(scen, method, "", "lambda_tilde_mean", lt.mean()[0]);
        out.push(scen, method, "", "lambda_tilde_sd", lt.cov()[(0, 0)].sqrt());
        out.push(
            scen,
            method,
            "",
            "lambda_bar_mean",
            h.lambda_bar_set().mean()[0],
        );
        for k in 0..h.group_ids.len() {
            out.push(
                scen,
                method,
                "",
                &format!("theta_mean_{}", h.group_ids[k]),
                h.theta_set(k).mean()[0],
            );
        }
        out.push(
            scen,
            method,
            "",
            "nonconverged",
            h.nonconverged.len() as f64,
        );
        if out.keep {
            out.hier_draws.push((draw_name(scen, method, ""), h));
        }
    }
    Ok(out)
}

pub fn tau_scenario(tau: f64) -> String {
    format!("tau={}", label(tau))
}

/// Relative Frobenius distance ‖A − B‖ / ‖B‖.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// One Dirichlet-allocation replicate per τ: λ̃ means and the λ̃ covariance
/// against the sandwich J_g⁻¹ I_g J_g⁻¹ / K at the λ-level MLE.
pub fn dirichlet_alloc_replicate(exp: &Experiment, ctx: &RepContext) -> Result<RepOutput> {
    let Experiment::DirichletAlloc(p) = exp else {
        return Err(Error::Config("expected dirichlet_alloc".into()));
    };
    let mut out = RepOutput::new(ctx);
    let SyntheticData::Allocation(data) = generate_synthetic(exp, 0, ctx.data_seed(0))? else {
        unreachable!()
    };
    let hats = data.proportions();
    let cats = data.categories();
    let (lambda_hat, sand) = lambda_sandwich(
        Arc::new(DirichletConditional { k: cats }),
        &hats,
        dirichlet_moments(&hats),
        &ctx.solve,
    )?;
    for (ti, &tau) in p.tau.iter().enumerate() {
        let scen = tau_scenario(tau);
        let h = sample_dirichlet_allocation(&data, tau, p.t, None, &ctx.run(ti as u64))?;
        let lt = h.lambda_tilde_set();
        let mean = lt.mean();
        let lb = h.lambda_bar_set().mean();
        let method = "dirichlet_alloc";
        let hyper = format!("T={}", p.t);
        let mut worst: f64 = 0.0;
        for l in 0..cats {
            out.push(
                &scen,
                method,
                &hyper,
                &format!("lambda_tilde_mean_{}", l + 1),
                mean[l],
            );
            out.push(
                &scen,
                method,
                &hyper,
                &format!("lambda_bar_mean_{}", l + 1),
                lb[l],
            );
            out.push(
                &scen,
                method,
                &hyper,
                &format!("lambda_hat_{}", l + 1),
                lambda_hat[l],
            );
            worst = worst.max((mean[l] - p.lambda[l]).abs() / p.lambda[l]);
        }
        out.push(&scen, method, &hyper, "max_rel_mean_error", worst);
        out.push(
            &scen,
            method,
            &hyper,
            "cov_rel_frobenius",
            rel_frobenius(&lt.cov(), &sand),
        );
        out.push(
            &scen,
            method,
            &hyper,
            "nonconverged",
            h.nonconverged.len() as f64,
        );
        if out.keep {
            out.hier_draws.push((draw_name(&scen, method, &hyper), h));
        }
    }
    Ok(out)
}

pub const RISK_SCENARIO: &str = "risk";

/// Paired Monte-Carlo risk of the power posterior minus the WLB predictive,
/// with the closed-form value at the population eigenvalue.
pub fn risk_theorem1_run(p: &RiskParams, ctx: &RepContext) -> Result<RepOutput> {
    let mut out = RepOutput::new(ctx);
    let scen = RISK_SCENARIO;
    let truth = GaussianTruth {
        mean: 0.0,
        var: p.sigma2_true,
    };
    let power = PowerPosteriorPredictive {
        noise_var: p.model_var,
        prior: GaussianPrior::scalar(0.0, p.prior_var)?,
        eta: p.eta,
    };
    let wlb = WlbPredictive {
        model: GaussianLocation::new(p.model_var),
        n_draws: p.wlb_draws,
        solve: ctx.solve,
    };
    let res = mc_risk_difference(&power, &wlb, &truth, p.n, p.reps, p.m_eval, ctx.run(0).seed)?;
    let hyper = format!("eta={}", label(p.eta));
    out.push(scen, "power", &hyper, "risk", res.a.risk);
    out.push(scen, "power", &hyper, "risk_se", res.a.se);
    out.push(scen, "wlb", "", "risk", res.b.risk);
    out.push(scen, "wlb", "", "risk_se", res.b.se);
    out.push(
        scen,
        "power_minus_wlb",
        &hyper,
        "difference",
        res.difference.risk,
    );
    out.push(
        scen,
        "power_minus_wlb",
        &hyper,
        "difference_se",
        res.difference.se,
    );
    out.push(
        scen,
        "power_minus_wlb",
        &hyper,
        "clipped",
        res.difference.clipped as f64,
    );
    let lambda = p.sigma2_true / p.model_var;
    out.push(
        scen,
        "closed_form",
        &hyper,
        "difference",
        risk_difference(&[lambda], p.eta, p.n),
    );
    // Plug-in version from one replicate-sized dataset.
    let data = toy1d(p.sigma2_true, p.n, ctx.data_seed(0))?;
    let model = GaussianLocation::new(p.model_var);
    let ev = eigenvalues(&empirical_info(
        &model,
        &data,
        &mle(&model, &data, &ctx.solve)?,
    )?)?;
    out.push(
        scen,
        "closed_form_plugin",
        &hyper,
        "difference",
        risk_difference(&ev, p.eta, p.n),
    );
    Ok(out)
}

pub const EDGEWORTH_SCENARIO: &str = "edgeworth";

/// Edgeworth inputs and cumulants at the MLE plus a Bartlett residual at the
/// pseudo-true rate under the data-generating law.
pub fn edgeworth_replicate(exp: &Experiment, ctx: &RepContext) -> Result<RepOutput> {
    let Experiment::EdgeworthReport(p) = exp else {
        return Err(Error::Config("expected edgeworth_report".into()));
    };
    let mut out = RepOutput::new(ctx);
    let scen = EDGEWORTH_SCENARIO;
    let data = generate_synthetic(exp, 0, ctx.data_seed(0))?.single();
    let model = GammaShapeKnown::new(p.model_alpha);
    let prior = GammaPrior::scalar(p.prior_shape, p.prior_rate)?;
    let inp = estimate_edgeworth_inputs(&model, &data, Some(&prior), p.w0, &ctx.solve)?;
    let (k1, k3) = kappa_coeffs(&inp)?;
    let hyper = format!("w0={}", label(p.w0));
    for (name, v) in [
        ("I", inp.i),
        ("J", inp.j),
        ("mu3", inp.mu3),
        ("A3", inp.a3),
        ("L12", inp.l12),
        ("kappa1", k1),
        ("kappa3", k3),
    ] {
        out.push(scen, "pb_pen", &hyper, name, v);
    }
    let data_alpha = p.data_alpha.unwrap_or(p.model_alpha);
    let gen = GammaShapeKnown::new(data_alpha);
    let gen_theta = DVector::from_element(1, p.rate);
    let pseudo_true = ParamVector::from_slice(&[p.model_alpha * p.rate / data_alpha])?;
    let sampler = |rng: &mut dyn RngCore| gen.sample_obs(&gen_theta, rng).expect("gamma sampler");
    let b = bartlett_residual_with(
        &model,
        &pseudo_true,
        &sampler,
        p.bartlett_m,
        ctx.reference_seed(0),
    )?;
    out.push(scen, "bartlett", "", "residual", b.residual);
    out.push(scen, "bartlett", "", "residual_se", b.se);
    if out.keep {
        let mut csv = String::from("y,edgeworth_density,normal_density\n");
        for [y, e, n] in density_grid(k1, k3, p.grid_lo, p.grid_hi, p.grid_points) {
            csv.push_str(&format!("{y},{e},{n}\n"));
        }
        out.files.push(("edgeworth_grid.csv".into(), csv));
        let json = serde_json::json!({
            "I": inp.i, "J": inp.j, "mu3": inp.mu3, "A3": inp.a3, "L12": inp.l12,
            "kappa1": k1, "kappa3": k3, "bartlett": b,
        });
        out.files.push((
            "edgeworth.json".into(),
            serde_json::to_string_pretty(&json)?,
        ));
    }
    Ok(out)
}

/// Runs replicate `ctx.replicate` of any experiment.
pub fn run_replicate(exp: &Experiment, ctx: &RepContext) -> Result<RepOutput> {
    match exp {
        Experiment::Toy1d(_) => toy1d_replicate(exp, ctx),
        Experiment::Toy2d(_) => toy2d_replicate(exp, ctx),
        Experiment::PoissonDispersion(_) => poisson_dispersion_replicate(exp, ctx),
        Experiment::GammaPoissonHier(_) => gamma_poisson_replicate(exp, ctx),
        Experiment::DirichletAlloc(_) => dirichlet_alloc_replicate(exp, ctx),
        Experiment::RiskTheorem1(p) => risk_theorem1_run(p, ctx),
        Experiment::EdgeworthReport(_) => edgeworth_replicate(exp, ctx),
    }
}

/// Median and mean of one (scenario, method, hyper, metric) cell over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub scenario: String,
    pub method: String,
    pub hyper: String,
    pub metric: String,
    pub count: usize,
    pub median: f64,
    pub mean: f64,
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Aggregates finite values per cell, in order of first appearance.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut index: HashMap<(&str, &str, &str, &str), usize> = HashMap::new();
    let mut cells: Vec<(&ResultRow, Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (
            r.scenario.as_str(),
            r.method.as_str(),
            r.hyper.as_str(),
            r.metric.as_str(),
        );
        let k = *index.entry(key).or_insert_with(|| {
            cells.push((r, Vec::new()));
            cells.len() - 1
        });
        if r.value.is_finite() {
            cells[k].1.push(r.value);
        }
    }
    cells
        .into_iter()
        .map(|(r, mut v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            Aggregate {
                scenario: r.scenario.clone(),
                method: r.method.clone(),
                hyper: r.hyper.clone(),
                metric: r.metric.clone(),
                count: v.len(),
                median: median(&mut v),
                mean,
            }
        })
        .collect()
}

/// The cell with the smallest median among those matching scenario, method and metric.
pub fn argmin_median<'a>(
    aggs: &'a [Aggregate],
    scenario: &str,
    method: &str,
    metric: &str,
) -> Option<&'a Aggregate> {
    aggs.iter()
        .filter(|a| {
            a.scenario == scenario && a.method == method && a.metric == metric && a.count > 0
        })
        .min_by(|a, b| a.median.total_cmp(&b.median))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: String,
}

/// Grid minimizers derived from the aggregates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub scenario: String,
    pub method: String,
    pub metric: String,
    pub best_hyper: String,
    pub median: f64,
}

fn selections(exp: &Experiment, aggs: &[Aggregate]) -> Vec<Selection> {
    let mut keys: Vec<(String, &str, &str)> = Vec::new();
    match exp {
        Experiment::Toy1d(p) => keys.extend(
            p.sigma2
                .iter()
                .map(|&s| (toy1d_scenario(s), "pb_pen", "ks")),
        ),
        Experiment::Toy2d(_) => keys.push((TOY2D_SCENARIO.into(), "pb_pseudo", "bhattacharyya")),
        _ => {}
    }
    keys.into_iter()
        .filter_map(|(scen, method, metric)| {
            // w0* is not a grid point; leave it out of the grid search.
            let grid: Vec<Aggregate> = aggs
                .iter()
                .filter(|a| a.hyper != "w0_star")
                .cloned()
                .collect();
            argmin_median(&grid, &scen, method, metric).map(|a| Selection {
                scenario: scen.clone(),
                method: method.into(),
                metric: metric.into(),
                best_hyper: a.hyper.clone(),
                median: a.median,
            })
        })
        .collect()
}

/// Outcome of `run_experiment`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub output_dir: PathBuf,
    pub reps: usize,
    pub failures: Vec<ReplicateFailure>,
    pub aggregates: Vec<Aggregate>,
    pub selections: Vec<Selection>,
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
    pub wall_ms: u128,
}

impl ExperimentReport {
    pub fn failed_fraction(&self) -> f64 {
        self.failures.len() as f64 / self.reps as f64
    }

    /// More than 10% of replicates failed.
    pub fn exceeds_failure_threshold(&self) -> bool {
        self.failed_fraction() > MAX_FAILED_FRACTION
    }
}

/// Runs every replicate, then writes `resolved_config.json`, `results.csv`,
/// `summary.json` and replicate 0's draws under `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("resolved_config.json"), cfg)?;
    let reps = match cfg.experiment {
        // Replication happens inside the nested risk estimate.
        Experiment::RiskTheorem1(_) => 1,
        _ => cfg.reps,
    };
    let inner_workers = if cfg.workers == Some(1) {
        Some(1)
    } else {
        None
    };
    info!("running {} with {reps} replicate(s)", cfg.experiment.id());
    let outcomes = run_indexed(reps, cfg.workers, |r| {
        let ctx = RepContext {
            replicate: r,
            master_seed: cfg.seed,
            n_draws: cfg.n_draws,
            solve: cfg.solve,
            workers: inner_workers,
            keep_draws: r == 0,
        };
        let t = Instant::now();
        let res = run_replicate(&cfg.experiment, &ctx);
        (res, t.elapsed().as_millis())
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut first: Option<(RepOutput, u128)> = None;
    for (r, (res, ms)) in outcomes.into_iter().enumerate() {
        match res {
            Ok(mut o) => {
                rows.append(&mut o.rows);
                if r == 0 {
                    first = Some((o, ms));
                }
            }
            Err(e) => {
                warn!("replicate {r} failed: {e}");
                failures.push(ReplicateFailure {
                    replicate: r,
                    error: e.to_string(),
                });
            }
        }
    }

    let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let mut draw_summaries = Vec::new();
    if let Some((o, ms)) = &first {
        let ddir = dir.join("draws");
        std::fs::create_dir_all(&ddir)?;
        for (name, d) in &o.draws {
            write_draws_csv(&ddir.join(format!("{name}.csv")), d)?;
            draw_summaries.push(serde_json::json!({ "name": name, "summary": d.summary(0, *ms) }));
        }
        for (name, h) in &o.hier_draws {
            write_hier_draws(&ddir.join(name), h)?;
        }
        for (name, text) in &o.files {
            std::fs::write(dir.join(name), text)?;
        }
    }

    let aggregates = aggregate(&rows);
    let report = ExperimentReport {
        experiment: cfg.experiment.id().into(),
        output_dir: dir.clone(),
        reps,
        failures,
        selections: selections(&cfg.experiment, &aggregates),
        aggregates,
        rows,
        wall_ms: start.elapsed().as_millis(),
    };
    let mut summary = serde_json::to_value(&report)?;
    summary["draws"] = serde_json::Value::Array(draw_summaries);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for id in [
            "toy1d",
            "toy2d",
            "poisson_dispersion",
            "gamma_poisson_hier",
            "dirichlet_alloc",
            "risk_theorem1",
            "edgeworth_report",
        ] {
            let cfg = ExperimentConfig::with_experiment(Experiment::default_for(id).unwrap());
            let text = serde_json::to_string(&cfg).unwrap();
            assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"schema_version":1,"experiment":{"id":"toy1d","n":50}}"#,
        )
        .unwrap();
        let Experiment::Toy1d(p) = &cfg.experiment else {
            panic!()
        };
        assert_eq!(p.n, 50);
        assert_eq!(p.sigma2, vec![0.6, 1.0, 2.8]);
        assert_eq!(p.w0_grid.len(), 20);
        assert_eq!(p.w0_grid[2], 0.6);
        assert_eq!(cfg.reps, 20);
        assert_eq!(cfg.n_draws, 2000);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            r#"{"schema_version":1,"experiment":{"id":"toy1d","bogus":1}}"#,
            r#"{"schema_version":1,"bogus":1,"experiment":{"id":"toy1d"}}"#,
            r#"{"schema_version":1,"experiment":{"id":"toy3d"}}"#,
            r#"{"schema_version":1,"solve":{"tol":1},"experiment":{"id":"toy1d"}}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn schema_and_values_validated() {
        assert!(
            ExperimentConfig::from_json(r#"{"schema_version":2,"experiment":{"id":"toy1d"}}"#)
                .is_err()
        );
        assert!(ExperimentConfig::from_json(
            r#"{"schema_version":1,"reps":0,"experiment":{"id":"toy1d"}}"#
        )
        .is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"schema_version":1,"experiment":{"id":"toy1d","sigma2":[-1]}}"#
        )
        .is_err());
        assert!(Experiment::default_for("nope").is_err());
    }

    #[test]
    fn synthetic_shapes() {
        let e = Experiment::default_for("toy2d").unwrap();
        assert_eq!(generate_synthetic(&e, 0, 3).unwrap().single().n(), 200);
        let e = Experiment::default_for("dirichlet_alloc").unwrap();
        let SyntheticData::Allocation(a) = generate_synthetic(&e, 0, 3).unwrap() else {
            panic!()
        };
        assert_eq!(a.counts.len(), 300);
        assert!(a.counts.iter().all(|r| r.iter().sum::<u64>() == 1000));
        let e = Experiment::default_for("toy1d").unwrap();
        assert!(generate_synthetic(&e, 3, 0).is_err());
    }

    #[test]
    fn aggregate_and_argmin() {
        let row = |rep, hyper: &str, v| ResultRow {
            replicate: rep,
            scenario: "s".into(),
            method: "m".into(),
            hyper: hyper.into(),
            metric: "ks".into(),
            value: v,
        };
        let rows = vec![
            row(0, "a", 3.0),
            row(0, "b", 1.0),
            row(1, "a", 1.0),
            row(1, "b", 2.0),
            row(2, "a", 2.0),
            row(2, "b", f64::NAN),
        ];
        let aggs = aggregate(&rows);
        assert_eq!(aggs.len(), 2);
        assert_eq!(aggs[0].median, 2.0);
        assert_eq!(aggs[1].count, 2);
        assert_eq!(aggs[1].median, 1.5);
        assert_eq!(argmin_median(&aggs, "s", "m", "ks").unwrap().hyper, "b");
    }

    #[test]
    fn labels_are_clean() {
        assert_eq!(label(0.2 * 3.0), "0.6");
        assert_eq!(label(2.8), "2.8");
        assert_eq!(
            draw_name("sigma2=1", "pb_pen", "0.4"),
            "sigma2_1__pb_pen__0.4"
        );
    }

    #[test]
    fn small_run_is_byte_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let exp = Experiment::Toy1d(Toy1dParams {
            sigma2: vec![1.0],
            n: 30,
            w0_grid: vec![0.5, 1.0],
            bags: 4,
            ..Default::default()
        });
        let mut cfg = ExperimentConfig::with_experiment(exp);
        cfg.reps = 2;
        cfg.n_draws = 40;
        let run = |dir: &Path, workers| {
            let mut c = cfg.clone();
            c.output_dir = dir.to_path_buf();
            c.workers = Some(workers);
            run_experiment(&c).unwrap();
            std::fs::read(dir.join("results.csv")).unwrap()
        };
        let a = run(&tmp.path().join("a"), 1);
        let b = run(&tmp.path().join("b"), 2);
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("replicate,scenario,method,hyper,metric,value\n"));
        assert!(tmp
            .path()
            .join("a/draws/sigma2_1__pb_pen__0.5.csv")
            .exists());
        let resolved = std::fs::read_to_string(tmp.path().join("a/resolved_config.json")).unwrap();
        let back = ExperimentConfig::from_json(&resolved).unwrap();
        assert_eq!(back.experiment, cfg.experiment);
    }
}
