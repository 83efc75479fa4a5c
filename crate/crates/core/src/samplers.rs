//! Flat Posterior Bootstrap samplers.
//!
//! Draw j uses stream `RngStream::new(seed, j)` and consumes it in a fixed order:
//! pseudo-parameters, pseudo-observations, data weights, pseudo-weights, then
//! any extra variate (the WBB prior multiplier).

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::mean_cov;
use crate::model::{Dataset, ParametricModel, Prior};
use crate::rng::{exponential, RngStream};
use crate::solve::{
    draw_weights_from, maximize, mle, Objective, Penalty, PenaltyWeight, SolveConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Wlb,
    PbPenalized,
    PbPseudo,
    Wbb,
    PbPostpred,
    Bayes,
    Power,
    BayesBag,
    HierPenalized,
    HierLargeK,
    DirichletAllocation,
    /// Draws read from a file.
    External,
}

/// Hyperparameters recorded with a draw set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hyper {
    None,
    W0(PenaltyWeight),
    Pseudo { c: f64, t: usize },
    LambdaReg(f64),
    Eta(f64),
    BayesBag { b: usize, bags: usize },
    Allocation { t: usize, tau: f64 },
}

/// Posterior draws (one row per retained draw) with reproducibility metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    pub draws: DMatrix<f64>,
    pub algorithm: Algorithm,
    pub hyper: Hyper,
    pub master_seed: u64,
    pub n_requested: usize,
    /// Draw indices whose solve failed; those rows are absent from `draws`.
    pub nonconverged: Vec<usize>,
}

impl DrawSet {
    pub fn from_rows(
        rows: &[DVector<f64>],
        algorithm: Algorithm,
        hyper: Hyper,
        master_seed: u64,
    ) -> Result<Self> {
        let d = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::Empty("draws".into()))?;
        let draws = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Ok(Self {
            draws,
            algorithm,
            hyper,
            master_seed,
            n_requested: rows.len(),
            nonconverged: Vec::new(),
        })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    /// Original draw index of each retained row.
    pub fn kept_indices(&self) -> Vec<usize> {
        let total = self.n_draws() + self.nonconverged.len();
        (0..total)
            .filter(|j| self.nonconverged.binary_search(j).is_err())
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.column(j).iter().copied().collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        mean_cov(&self.draws).0
    }

    /// Unbiased sample covariance.
    pub fn cov(&self) -> DMatrix<f64> {
        mean_cov(&self.draws).1
    }

    pub fn summary(&self, n_data: usize, wall_ms: u128) -> DrawSummary {
        let (mean, cov) = mean_cov(&self.draws);
        DrawSummary {
            algorithm: self.algorithm,
            hyper: self.hyper.clone(),
            n: n_data,
            big_n: self.n_requested,
            seed: self.master_seed,
            mean: mean.iter().copied().collect(),
            cov: (0..cov.nrows())
                .map(|i| cov.row(i).iter().copied().collect())
                .collect(),
            nonconverged: self.nonconverged.len(),
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrawSummary {
    pub algorithm: Algorithm,
    pub hyper: Hyper,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub nonconverged: usize,
    pub wall_ms: u128,
}

/// Draw count, master seed, solver settings and worker count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub n_draws: usize,
    pub seed: u64,
    pub solve: SolveConfig,
    /// `None` uses the ambient rayon pool; `Some(1)` runs sequentially.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn new(n_draws: usize, seed: u64) -> Self {
        Self {
            n_draws,
            seed,
            solve: SolveConfig::default(),
            workers: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Config("number of draws must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be positive".into()));
        }
        self.solve.validate()
    }
}

/// Evaluates `f(0..n)` with results ordered by index, independent of scheduling.
pub fn run_indexed<R, F>(n: usize, workers: Option<usize>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match workers {
        Some(1) => (0..n).map(f).collect(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("thread pool")
            .install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).into_par_iter().map(f).collect(),
    }
}

/// A source of parameter draws θ̄ for pseudo-sample algorithms.
pub trait ParamSampler: Send + Sync {
    fn sample_param(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>>;
}

/// Uses a prior's generative sampler.
pub struct PriorSampler<'a>(pub &'a dyn Prior);

impl ParamSampler for PriorSampler<'_> {
    fn sample_param(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        self.0.sample(rng)
    }
}

fn check_data(model: &dyn ParametricModel, data: &Dataset) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::Empty("dataset".into()));
    }
    if data.obs_dim() != model.obs_dim() {
        return Err(Error::Dimension {
            expected: model.obs_dim(),
            got: data.obs_dim(),
        });
    }
    Ok(())
}

pub(crate) fn assemble(
    results: Vec<Result<DVector<f64>>>,
    d: usize,
    algorithm: Algorithm,
    hyper: Hyper,
    run: &RunConfig,
) -> DrawSet {
    let mut rows = Vec::with_capacity(results.len());
    let mut nonconverged = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => rows.push(t),
            Err(e) => {
                debug!("draw {j} dropped: {e}");
                nonconverged.push(j);
            }
        }
    }
    DrawSet {
        draws: DMatrix::from_fn(rows.len(), d, |i, k| rows[i][k]),
        algorithm,
        hyper,
        master_seed: run.seed,
        n_requested: run.n_draws,
        nonconverged,
    }
}

/// Shared path for WLB, the prior-penalized sampler and WBB. `wbb` carries λ_reg.
fn penalized_draws(
    model: &dyn ParametricModel,
    data: &Dataset,
    prior: Option<(&dyn Prior, &PenaltyWeight)>,
    wbb: Option<f64>,
    run: &RunConfig,
) -> Result<Vec<Result<DVector<f64>>>> {
    check_data(model, data)?;
    run.validate()?;
    if let Some((p, w0)) = prior {
        Penalty::new(p, w0)?;
    }
    let init = mle(model, data, &run.solve)?;
    let n = data.n();
    Ok(run_indexed(run.n_draws, run.workers, |j| {
        let mut rng = RngStream::new(run.seed, j as u64).rng();
        let w = draw_weights_from(&mut rng, n, 1.0);
        let scaled;
        let penalty = match (prior, wbb) {
            (Some((p, _)), Some(lambda_reg)) => {
                let wt = exponential(&mut rng, 1.0);
                scaled = PenaltyWeight::Scalar(lambda_reg * wt);
                Some(Penalty::new(p, &scaled)?)
            }
            (Some((p, w0)), None) => Some(Penalty::new(p, w0)?),
            (None, _) => None,
        };
        let obj = Objective::new(model)
            .with_data(data, &w.w)?
            .with_penalty(penalty)?;
        Ok(maximize(&obj, &init, &run.solve)?.theta)
    }))
}

/// Weighted likelihood bootstrap: each draw maximizes Σ wᵢ ℓ(xᵢ, θ), wᵢ ~ Exp(1).
pub fn sample_wlb(model: &dyn ParametricModel, data: &Dataset, run: &RunConfig) -> Result<DrawSet> {
    let res = penalized_draws(model, data, None, None, run)?;
    Ok(assemble(res, model.dim(), Algorithm::Wlb, Hyper::None, run))
}

/// Prior-penalized Posterior Bootstrap: maximize Σ wᵢ ℓ(xᵢ, θ) + w₀ᵀ log π(θ).
pub fn sample_pb_penalized(
    model: &dyn ParametricModel,
    data: &Dataset,
    prior: &dyn Prior,
    w0: &PenaltyWeight,
    run: &RunConfig,
) -> Result<DrawSet> {
    let res = penalized_draws(model, data, Some((prior, w0)), None, run)?;
    Ok(assemble(
        res,
        model.dim(),
        Algorithm::PbPenalized,
        Hyper::W0(w0.clone()),
        run,
    ))
}

/// Weighted Bayesian bootstrap: the prior term is λ_reg·w̃·log π(θ) with w̃ ~ Exp(1).
pub fn sample_wbb(
    model: &dyn ParametricModel,
    data: &Dataset,
    prior: &dyn Prior,
    lambda_reg: f64,
    run: &RunConfig,
) -> Result<DrawSet> {
    if !(lambda_reg >= 0.0 && lambda_reg.is_finite()) {
        return Err(Error::Config(
            "lambda_reg must be finite and non-negative".into(),
        ));
    }
    let zero = PenaltyWeight::Scalar(0.0);
    let res = penalized_draws(model, data, Some((prior, &zero)), Some(lambda_reg), run)?;
    Ok(assemble(
        res,
        model.dim(),
        Algorithm::Wbb,
        Hyper::LambdaReg(lambda_reg),
        run,
    ))
}

fn pseudo_draws(
    model: &dyn ParametricModel,
    data: &Dataset,
    source: &dyn ParamSampler,
    c: f64,
    t: usize,
    run: &RunConfig,
) -> Result<Vec<Result<DVector<f64>>>> {
    check_data(model, data)?;
    run.validate()?;
    if !(c > 0.0 && c.is_finite()) || t == 0 {
        return Err(Error::Config("pseudo-samples need c > 0 and T ≥ 1".into()));
    }
    let init = mle(model, data, &run.solve)?;
    let mut probe = RngStream::new(run.seed, u64::MAX).rng();
    if model.sample_obs(&init, &mut probe).is_none() {
        return Err(Error::Unsupported(format!(
            "{} has no generative sampler",
            model.name()
        )));
    }
    let n = data.n();
    let rate = t as f64 / c;
    Ok(run_indexed(run.n_draws, run.workers, |j| {
        let mut rng = RngStream::new(run.seed, j as u64).rng();
        let mut params = Vec::with_capacity(t);
        for _ in 0..t {
            let p = source
                .sample_param(&mut rng)
                .ok_or_else(|| Error::Solver("parameter sampler failed".into()))?;
            params.push(p);
        }
        let mut pseudo = Vec::with_capacity(t * model.obs_dim());
        for p in &params {
            let x = model
                .sample_obs(p, &mut rng)
                .ok_or_else(|| Error::Solver("observation sampler failed".into()))?;
            pseudo.extend(x);
        }
        let pseudo = Dataset::new(pseudo, model.obs_dim())?;
        let w = draw_weights_from(&mut rng, n, 1.0);
        let wp = draw_weights_from(&mut rng, t, rate);
        let obj = Objective::new(model)
            .with_data(data, &w.w)?
            .with_data(&pseudo, &wp.w)?;
        Ok(maximize(&obj, &init, &run.solve)?.theta)
    }))
}

/// Posterior Bootstrap with T prior-predictive pseudo-samples weighted Exp(T/c).
pub fn sample_pb_pseudo(
    model: &dyn ParametricModel,
    data: &Dataset,
    prior: &dyn Prior,
    c: f64,
    t: usize,
    run: &RunConfig,
) -> Result<DrawSet> {
    let mut probe = RngStream::new(run.seed, u64::MAX).rng();
    if prior.sample(&mut probe).is_none() {
        return Err(Error::Unsupported("prior has no generative sampler".into()));
    }
    let res = pseudo_draws(model, data, &PriorSampler(prior), c, t, run)?;
    Ok(assemble(
        res,
        model.dim(),
        Algorithm::PbPseudo,
        Hyper::Pseudo { c, t },
        run,
    ))
}

/// As `sample_pb_pseudo`, with pseudo-parameters drawn from a supplied posterior.
pub fn sample_pb_postpred(
    model: &dyn ParametricModel,
    data: &Dataset,
    posterior: &dyn ParamSampler,
    c: f64,
    t: usize,
    run: &RunConfig,
) -> Result<DrawSet> {
    let res = pseudo_draws(model, data, posterior, c, t, run)?;
    Ok(assemble(
        res,
        model.dim(),
        Algorithm::PbPostpred,
        Hyper::Pseudo { c, t },
        run,
    ))
}
