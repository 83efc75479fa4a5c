//! Posterior Bootstrap for hierarchical models x_k ~ f(·|θ_k), θ_k ~ g(·|λ), λ ~ p.
//!
//! Draw j uses `RngStream::new(seed, j)`. Group k consumes the substream
//! `child(group_id)`, λ-level variates of the conditional sampler come from
//! `child(LAMBDA_KEY)`. Groups are visited in ascending id order, so permuting
//! the input groups permutes the output bit for bit.

use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::info::{empirical_info, prior_weight_rule, sandwich, wg_for_hyperprior};
use crate::model::{
    categorical, conditional_thetas_dataset, sample_dirichlet, ConditionalPrior, Dataset,
    DirichletConditional, LambdaConditional, LambdaModel, Multinomial, ParametricModel, Prior,
    ThetaPrior, TruncatedNormalPrior,
};
use crate::rng::{exponential, RngStream};
use crate::samplers::{run_indexed, Algorithm, DrawSet, Hyper, RunConfig};
use crate::solve::{
    draw_weights_from, maximize, mle, Objective, Penalty, PenaltyWeight, SolveConfig,
};

/// Substream key reserved for λ-level variates; not a valid group id.
pub const LAMBDA_KEY: u64 = u64::MAX;

/// One group's observations with a stable identifier.
#[derive(Debug, Clone)]
pub struct Group {
    pub id: u64,
    pub data: Dataset,
}

/// Likelihood f, conditional prior g(θ|λ), hyperprior p(λ) and, for
/// conjugate cases, an exact sampler for p(λ|θ₁..θ_K).
#[derive(Clone)]
pub struct HierarchicalSpec {
    pub groups: Vec<Group>,
    pub f: Arc<dyn ParametricModel>,
    pub g: Arc<dyn ConditionalPrior>,
    /// `None` is a flat hyperprior.
    pub hyperprior: Option<Arc<dyn Prior>>,
    pub lambda_conditional: Option<Arc<dyn LambdaConditional>>,
    /// Starting point for λ-level optimization; all ones when absent.
    pub lambda_init: Option<DVector<f64>>,
}

impl HierarchicalSpec {
    pub fn new(
        groups: Vec<Group>,
        f: Arc<dyn ParametricModel>,
        g: Arc<dyn ConditionalPrior>,
    ) -> Result<Self> {
        let spec = Self {
            groups,
            f,
            g,
            hyperprior: None,
            lambda_conditional: None,
            lambda_init: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_hyperprior(mut self, p: Arc<dyn Prior>) -> Result<Self> {
        self.hyperprior = Some(p);
        self.validate()?;
        Ok(self)
    }

    pub fn with_conditional(mut self, c: Arc<dyn LambdaConditional>) -> Self {
        self.lambda_conditional = Some(c);
        self
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Empty("no groups".into()));
        }
        let mut ids: Vec<u64> = self.groups.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("group ids must be unique".into()));
        }
        if ids.last() == Some(&LAMBDA_KEY) {
            return Err(Error::Config("group id u64::MAX is reserved".into()));
        }
        for gr in &self.groups {
            if gr.data.n() == 0 {
                return Err(Error::Empty(format!("group {} has no observations", gr.id)));
            }
            if gr.data.obs_dim() != self.f.obs_dim() {
                return Err(Error::Dimension {
                    expected: self.f.obs_dim(),
                    got: gr.data.obs_dim(),
                });
            }
        }
        if self.f.dim() != self.g.theta_dim() {
            return Err(Error::Dimension {
                expected: self.f.dim(),
                got: self.g.theta_dim(),
            });
        }
        if let Some(p) = &self.hyperprior {
            if p.dim() != self.g.lambda_dim() {
                return Err(Error::Dimension {
                    expected: self.g.lambda_dim(),
                    got: p.dim(),
                });
            }
        }
        if let Some(l) = &self.lambda_init {
            if l.len() != self.g.lambda_dim() {
                return Err(Error::Dimension {
                    expected: self.g.lambda_dim(),
                    got: l.len(),
                });
            }
        }
        Ok(())
    }

    /// Group positions in ascending id order.
    pub fn sorted_order(&self) -> Vec<usize> {
        sorted_order(&self.groups.iter().map(|g| g.id).collect::<Vec<_>>())
    }

    /// Per-group maximum-likelihood estimates, in input order.
    pub fn group_mles(&self, cfg: &SolveConfig) -> Result<Vec<DVector<f64>>> {
        self.groups
            .iter()
            .map(|gr| {
                mle(self.f.as_ref(), &gr.data, cfg)
                    .map(|t| t.into_inner())
                    .map_err(|e| Error::Solver(format!("group {}: {e}", gr.id)))
            })
            .collect()
    }

    /// Per-group sandwich weights w0* from each group's I_n and J_n.
    pub fn default_w0(&self, mles: &[DVector<f64>]) -> Result<Vec<PenaltyWeight>> {
        let probe = ThetaPrior::new(
            self.g.clone(),
            DVector::from_element(self.g.lambda_dim(), 1.0),
        );
        self.groups
            .iter()
            .zip(mles)
            .map(|(gr, t)| {
                let theta = crate::model::ParamVector::new(t.clone())?;
                let info = empirical_info(self.f.as_ref(), &gr.data, &theta)?;
                prior_weight_rule(&info, &probe)
            })
            .collect()
    }
}

fn sorted_order(ids: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&k| ids[k]);
    order
}

/// Aligned hierarchical draws: row i of every matrix comes from the same draw.
#[derive(Debug, Clone, PartialEq)]
pub struct HierDrawSet {
    pub group_ids: Vec<u64>,
    /// One matrix per group in input order, rows = retained draws.
    pub theta_draws: Vec<DMatrix<f64>>,
    pub lambda_tilde: DMatrix<f64>,
    pub lambda_bar: DMatrix<f64>,
    pub algorithm: Algorithm,
    pub hyper: Hyper,
    pub master_seed: u64,
    pub n_requested: usize,
    pub nonconverged: Vec<usize>,
    /// One message per dropped draw, naming the failing group where known.
    pub failures: Vec<String>,
}

impl HierDrawSet {
    pub fn n_draws(&self) -> usize {
        self.lambda_tilde.nrows()
    }

    fn as_set(&self, m: &DMatrix<f64>) -> DrawSet {
        DrawSet {
            draws: m.clone(),
            algorithm: self.algorithm,
            hyper: self.hyper.clone(),
            master_seed: self.master_seed,
            n_requested: self.n_requested,
            nonconverged: self.nonconverged.clone(),
        }
    }

    pub fn lambda_tilde_set(&self) -> DrawSet {
        self.as_set(&self.lambda_tilde)
    }

    pub fn lambda_bar_set(&self) -> DrawSet {
        self.as_set(&self.lambda_bar)
    }

    /// Draws of θ̃ for the group at input position `k`.
    pub fn theta_set(&self, k: usize) -> DrawSet {
        self.as_set(&self.theta_draws[k])
    }
}

struct DrawOut {
    thetas: Vec<DVector<f64>>,
    lambda_bar: DVector<f64>,
    lambda_tilde: DVector<f64>,
}

fn to_matrix(rows: &[&DVector<f64>], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

fn assemble(
    results: Vec<Result<DrawOut>>,
    ids: Vec<u64>,
    dims: (usize, usize),
    algorithm: Algorithm,
    hyper: Hyper,
    run: &RunConfig,
) -> HierDrawSet {
    let (dt, dl) = dims;
    let mut ok = Vec::with_capacity(results.len());
    let mut nonconverged = Vec::new();
    let mut failures = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => ok.push(o),
            Err(e) => {
                debug!("hierarchical draw {j} dropped: {e}");
                nonconverged.push(j);
                failures.push(format!("draw {j}: {e}"));
            }
        }
    }
    let theta_draws = (0..ids.len())
        .map(|k| to_matrix(&ok.iter().map(|o| &o.thetas[k]).collect::<Vec<_>>(), dt))
        .collect();
    HierDrawSet {
        group_ids: ids,
        theta_draws,
        lambda_tilde: to_matrix(&ok.iter().map(|o| &o.lambda_tilde).collect::<Vec<_>>(), dl),
        lambda_bar: to_matrix(&ok.iter().map(|o| &o.lambda_bar).collect::<Vec<_>>(), dl),
        algorithm,
        hyper,
        master_seed: run.seed,
        n_requested: run.n_draws,
        nonconverged,
        failures,
    }
}

fn resolve_w0(
    spec: &HierarchicalSpec,
    w0: Option<Vec<PenaltyWeight>>,
    mles: &[DVector<f64>],
) -> Result<Vec<PenaltyWeight>> {
    let w0 = match w0 {
        Some(w) => w,
        None => spec.default_w0(mles)?,
    };
    if w0.len() != spec.k() {
        return Err(Error::Dimension {
            expected: spec.k(),
            got: w0.len(),
        });
    }
    Ok(w0)
}

/// θ̃_k = argmax Σ wᵢ log f(x_ki|θ) + w0ᵀ log g(θ|λ̄), wᵢ ~ Exp(1).
fn penalized_group(
    spec: &HierarchicalSpec,
    k: usize,
    start: &DVector<f64>,
    w0: &PenaltyWeight,
    lambda_bar: &DVector<f64>,
    rng: &mut ChaCha8Rng,
    cfg: &SolveConfig,
) -> Result<DVector<f64>> {
    let data = &spec.groups[k].data;
    let w = draw_weights_from(rng, data.n(), 1.0);
    let prior = ThetaPrior::new(spec.g.clone(), lambda_bar.clone());
    let obj = Objective::new(spec.f.as_ref())
        .with_data(data, &w.w)?
        .with_penalty(Some(Penalty::new(&prior, w0)?))?;
    maximize(&obj, start, cfg)
        .map(|o| o.theta)
        .map_err(|e| Error::Solver(format!("group {}: {e}", spec.groups[k].id)))
}

/// Posterior Bootstrap for hierarchical models with an exact λ-conditional:
/// λ̄ ~ p(λ|θ̂), θ̃_k penalized by w0_k·log g(θ_k|λ̄), λ̃ ~ p(λ|θ̃).
///
/// `w0 = None` uses per-group w0* weights.
pub fn sample_hier_penalized(
    spec: &HierarchicalSpec,
    w0: Option<Vec<PenaltyWeight>>,
    run: &RunConfig,
) -> Result<HierDrawSet> {
    spec.validate()?;
    run.validate()?;
    let cond = spec.lambda_conditional.clone().ok_or_else(|| {
        Error::Config("no exact λ-conditional sampler; use sample_hier_large_k instead".into())
    })?;
    let mles = spec.group_mles(&run.solve)?;
    let w0 = resolve_w0(spec, w0, &mles)?;
    let order = spec.sorted_order();
    let sorted_hats: Vec<DVector<f64>> = order.iter().map(|&k| mles[k].clone()).collect();
    let res = run_indexed(run.n_draws, run.workers, |j| {
        let s = RngStream::new(run.seed, j as u64);
        let mut lrng = s.child(LAMBDA_KEY).rng();
        let lambda_bar = cond.sample(&sorted_hats, &mut lrng);
        let mut thetas = vec![DVector::zeros(0); spec.k()];
        for &k in &order {
            let mut grng = s.child(spec.groups[k].id).rng();
            thetas[k] = penalized_group(
                spec,
                k,
                &mles[k],
                &w0[k],
                &lambda_bar,
                &mut grng,
                &run.solve,
            )?;
        }
        let sorted: Vec<DVector<f64>> = order.iter().map(|&k| thetas[k].clone()).collect();
        let lambda_tilde = cond.sample(&sorted, &mut lrng);
        Ok(DrawOut {
            thetas,
            lambda_bar,
            lambda_tilde,
        })
    });
    let ids = spec.groups.iter().map(|g| g.id).collect();
    Ok(assemble(
        res,
        ids,
        (spec.f.dim(), spec.g.lambda_dim()),
        Algorithm::HierPenalized,
        Hyper::None,
        run,
    ))
}

/// The λ-level objective Σ_k u_k log g(θ_k|λ) + w_gᵀ log p(λ).
struct LambdaLevel<'a> {
    model: LambdaModel,
    hyperprior: Option<&'a dyn Prior>,
    w_g: PenaltyWeight,
    init: DVector<f64>,
}

impl LambdaLevel<'_> {
    fn argmax(
        &self,
        thetas: &Dataset,
        u: &[f64],
        start: &DVector<f64>,
        cfg: &SolveConfig,
    ) -> Result<DVector<f64>> {
        let pen = match self.hyperprior {
            Some(p) => Some(Penalty::new(p, &self.w_g)?),
            None => None,
        };
        let obj = Objective::new(&self.model)
            .with_data(thetas, u)?
            .with_penalty(pen)?;
        maximize(&obj, start, cfg)
            .map(|o| o.theta)
            .map_err(|e| Error::Solver(format!("λ step: {e}")))
    }
}

/// Picks w_g (default from I_g, J_g at the λ-level MLE) and the penalized λ
/// optimum used to start every λ-level solve.
fn lambda_level<'a>(
    g: &Arc<dyn ConditionalPrior>,
    hyperprior: Option<&'a dyn Prior>,
    sorted_hats: &[DVector<f64>],
    w_g: Option<PenaltyWeight>,
    start: DVector<f64>,
    cfg: &SolveConfig,
) -> Result<LambdaLevel<'a>> {
    let dl = g.lambda_dim();
    let data = conditional_thetas_dataset(sorted_hats);
    let ones = vec![1.0; sorted_hats.len()];
    let mut lvl = LambdaLevel {
        model: LambdaModel::new(g.clone()),
        hyperprior,
        w_g: PenaltyWeight::Scalar(0.0),
        init: start,
    };
    match w_g {
        Some(w) => {
            if let PenaltyWeight::Vector(v) = &w {
                if v.len() != dl {
                    return Err(Error::Dimension {
                        expected: dl,
                        got: v.len(),
                    });
                }
            }
            lvl.w_g = w;
        }
        None => {
            if sorted_hats.len() < dl + 1 {
                return Err(Error::Rank(format!(
                    "{} groups cannot identify a {dl}-dimensional λ; supply w_g explicitly",
                    sorted_hats.len()
                )));
            }
            let unpenalized = LambdaLevel {
                w_g: PenaltyWeight::Scalar(0.0),
                init: lvl.init.clone(),
                ..lvl
            };
            let lambda_hat = unpenalized.argmax(&data, &ones, &unpenalized.init, cfg)?;
            lvl = LambdaLevel {
                init: lambda_hat.clone(),
                ..unpenalized
            };
            if let Some(p) = hyperprior {
                let lh = crate::model::ParamVector::new(lambda_hat)?;
                lvl.w_g = wg_for_hyperprior(sorted_hats, g.clone(), &lh, p)?;
            }
        }
    }
    lvl.init = lvl.argmax(&data, &ones, &lvl.init, cfg)?;
    Ok(lvl)
}

/// Large-K hierarchical Posterior Bootstrap: λ̄ and λ̃ are weighted
/// λ-level optima over θ̂ and θ̃ with Exp(1) group weights.
///
/// `w0 = None` uses per-group w0*; `w_g = None` uses the sandwich rule on the
/// λ-level information.
pub fn sample_hier_large_k(
    spec: &HierarchicalSpec,
    w0: Option<Vec<PenaltyWeight>>,
    w_g: Option<PenaltyWeight>,
    run: &RunConfig,
) -> Result<HierDrawSet> {
    spec.validate()?;
    run.validate()?;
    let mles = spec.group_mles(&run.solve)?;
    let w0 = resolve_w0(spec, w0, &mles)?;
    let order = spec.sorted_order();
    let sorted_hats: Vec<DVector<f64>> = order.iter().map(|&k| mles[k].clone()).collect();
    let start = spec
        .lambda_init
        .clone()
        .unwrap_or_else(|| DVector::from_element(spec.g.lambda_dim(), 1.0));
    let lvl = lambda_level(
        &spec.g,
        spec.hyperprior.as_deref(),
        &sorted_hats,
        w_g,
        start,
        &run.solve,
    )?;
    let hat_data = conditional_thetas_dataset(&sorted_hats);
    let res = run_indexed(run.n_draws, run.workers, |j| {
        let s = RngStream::new(run.seed, j as u64);
        let mut rngs: Vec<ChaCha8Rng> = order
            .iter()
            .map(|&k| s.child(spec.groups[k].id).rng())
            .collect();
        let z: Vec<f64> = rngs.iter_mut().map(|r| exponential(r, 1.0)).collect();
        let lambda_bar = lvl.argmax(&hat_data, &z, &lvl.init, &run.solve)?;
        let mut sorted = Vec::with_capacity(order.len());
        for (pos, &k) in order.iter().enumerate() {
            sorted.push(penalized_group(
                spec,
                k,
                &mles[k],
                &w0[k],
                &lambda_bar,
                &mut rngs[pos],
                &run.solve,
            )?);
        }
        let v: Vec<f64> = rngs.iter_mut().map(|r| exponential(r, 1.0)).collect();
        let lambda_tilde = lvl.argmax(
            &conditional_thetas_dataset(&sorted),
            &v,
            &lvl.init,
            &run.solve,
        )?;
        Ok(DrawOut {
            thetas: unsort(sorted, &order),
            lambda_bar,
            lambda_tilde,
        })
    });
    let ids = spec.groups.iter().map(|g| g.id).collect();
    Ok(assemble(
        res,
        ids,
        (spec.f.dim(), spec.g.lambda_dim()),
        Algorithm::HierLargeK,
        Hyper::None,
        run,
    ))
}

fn unsort(sorted: Vec<DVector<f64>>, order: &[usize]) -> Vec<DVector<f64>> {
    let mut out = vec![DVector::zeros(0); order.len()];
    for (v, &k) in sorted.into_iter().zip(order) {
        out[k] = v;
    }
    out
}

/// λ-level MLE λ̂ over group estimates and the large-K covariance
/// J_g⁻¹ I_g J_g⁻¹ / K at λ̂.
pub fn lambda_sandwich(
    g: Arc<dyn ConditionalPrior>,
    thetas: &[DVector<f64>],
    start: DVector<f64>,
    cfg: &SolveConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let lvl = LambdaLevel {
        model: LambdaModel::new(g),
        hyperprior: None,
        w_g: PenaltyWeight::Scalar(0.0),
        init: start,
    };
    let data = conditional_thetas_dataset(thetas);
    let hat = lvl.argmax(&data, &vec![1.0; thetas.len()], &lvl.init, cfg)?;
    let info = empirical_info(
        &lvl.model,
        &data,
        &crate::model::ParamVector::new(hat.clone())?,
    )?;
    Ok((hat, sandwich(&info)? / thetas.len() as f64))
}

/// Category counts per group for the Dirichlet allocation model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationData {
    pub group_ids: Vec<u64>,
    pub counts: Vec<Vec<u64>>,
}

impl AllocationData {
    /// Groups get ids 0..K. When `totals` is given each row must sum to it.
    pub fn new(counts: Vec<Vec<u64>>, totals: Option<&[u64]>) -> Result<Self> {
        let ids = (0..counts.len() as u64).collect();
        Self::with_ids(ids, counts, totals)
    }

    pub fn with_ids(
        group_ids: Vec<u64>,
        counts: Vec<Vec<u64>>,
        totals: Option<&[u64]>,
    ) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty("no groups".into()));
        }
        if group_ids.len() != counts.len() {
            return Err(Error::Dimension {
                expected: counts.len(),
                got: group_ids.len(),
            });
        }
        let cats = counts[0].len();
        if cats < 2 {
            return Err(Error::Config("need at least two categories".into()));
        }
        for (k, row) in counts.iter().enumerate() {
            if row.len() != cats {
                return Err(Error::Dimension {
                    expected: cats,
                    got: row.len(),
                });
            }
            let n: u64 = row.iter().sum();
            if n == 0 {
                return Err(Error::Empty(format!(
                    "group {} has no observations",
                    group_ids[k]
                )));
            }
            if let Some(t) = totals {
                if t.get(k) != Some(&n) {
                    return Err(Error::Config(format!(
                        "group {} counts do not sum to its total",
                        group_ids[k]
                    )));
                }
            }
        }
        let mut ids = group_ids.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.last() == Some(&LAMBDA_KEY) {
            return Err(Error::Config(
                "group ids must be unique and below u64::MAX".into(),
            ));
        }
        Ok(Self { group_ids, counts })
    }

    pub fn categories(&self) -> usize {
        self.counts[0].len()
    }

    /// θ̂_k = counts/n_k, clipped into the simplex interior.
    pub fn proportions(&self) -> Vec<DVector<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: u64 = row.iter().sum();
                Multinomial::clip_to_interior(&DVector::from_iterator(
                    row.len(),
                    row.iter().map(|&c| c as f64 / n as f64),
                ))
            })
            .collect()
    }
}

/// Dirichlet method-of-moments estimate of λ from group proportions, or
/// all ones when it is not identified.
pub fn dirichlet_moments(thetas: &[DVector<f64>]) -> DVector<f64> {
    let k = thetas[0].len();
    if thetas.len() < 2 {
        return DVector::from_element(k, 1.0);
    }
    let m = thetas.len() as f64;
    let mean = thetas.iter().fold(DVector::zeros(k), |a, t| a + t) / m;
    let var0 = thetas.iter().map(|t| (t[0] - mean[0]).powi(2)).sum::<f64>() / (m - 1.0);
    let s = mean[0] * (1.0 - mean[0]) / var0 - 1.0;
    if s.is_finite() && s > 0.0 {
        mean * s
    } else {
        DVector::from_element(k, 1.0)
    }
}

/// Posterior Bootstrap for the Dirichlet allocation model: multinomial
/// groups, Dirichlet(λ) group prior, truncated-normal TN(0, τ²) hyperprior.
///
/// Per draw: λ̄ from the weighted λ-level objective over θ̂; for each group
/// T pseudo-observations from Multinomial(Dirichlet(λ̄), 1) weighted
/// Exp(T/c) with c = Σλ̄, data weighted Exp(1); θ̃_k is the weighted category
/// share clipped into the simplex interior; λ̃ from the λ-level objective over θ̃.
pub fn sample_dirichlet_allocation(
    data: &AllocationData,
    tau: f64,
    t: usize,
    w_g: Option<PenaltyWeight>,
    run: &RunConfig,
) -> Result<HierDrawSet> {
    run.validate()?;
    if t == 0 {
        return Err(Error::Config("T must be at least 1".into()));
    }
    let cats = data.categories();
    let hyper = TruncatedNormalPrior::new(tau, cats)?;
    let g: Arc<dyn ConditionalPrior> = Arc::new(DirichletConditional { k: cats });
    let order = sorted_order(&data.group_ids);
    let hats = data.proportions();
    let sorted_hats: Vec<DVector<f64>> = order.iter().map(|&k| hats[k].clone()).collect();
    let start = dirichlet_moments(&sorted_hats);
    let lvl = lambda_level(&g, Some(&hyper), &sorted_hats, w_g, start, &run.solve)?;
    let hat_data = conditional_thetas_dataset(&sorted_hats);
    let res = run_indexed(run.n_draws, run.workers, |j| {
        let s = RngStream::new(run.seed, j as u64);
        let mut rngs: Vec<ChaCha8Rng> = order
            .iter()
            .map(|&k| s.child(data.group_ids[k]).rng())
            .collect();
        let z: Vec<f64> = rngs.iter_mut().map(|r| exponential(r, 1.0)).collect();
        let lambda_bar = lvl.argmax(&hat_data, &z, &lvl.init, &run.solve)?;
        let rate = t as f64 / lambda_bar.sum();
        let mut sorted = Vec::with_capacity(order.len());
        for (pos, &k) in order.iter().enumerate() {
            sorted.push(
                allocation_group(&data.counts[k], &lambda_bar, t, rate, &mut rngs[pos])
                    .map_err(|e| Error::Solver(format!("group {}: {e}", data.group_ids[k])))?,
            );
        }
        let v: Vec<f64> = rngs.iter_mut().map(|r| exponential(r, 1.0)).collect();
        let lambda_tilde = lvl.argmax(
            &conditional_thetas_dataset(&sorted),
            &v,
            &lvl.init,
            &run.solve,
        )?;
        Ok(DrawOut {
            thetas: unsort(sorted, &order),
            lambda_bar,
            lambda_tilde,
        })
    });
    Ok(assemble(
        res,
        data.group_ids.clone(),
        (cats, cats),
        Algorithm::DirichletAllocation,
        Hyper::Allocation { t, tau },
        run,
    ))
}

/// Weighted multinomial optimum for one group. Consumes, in order: T
/// Dirichlet(λ̄) draws, T categories, the data weights (category by
/// category), then T pseudo-weights.
fn allocation_group(
    counts: &[u64],
    lambda_bar: &DVector<f64>,
    t: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    let mut params = Vec::with_capacity(t);
    for _ in 0..t {
        params.push(
            sample_dirichlet(lambda_bar.as_slice(), rng)
                .ok_or_else(|| Error::Solver("Dirichlet pseudo-parameter underflowed".into()))?,
        );
    }
    let cats_drawn: Vec<usize> = params
        .iter()
        .map(|p| categorical(p.as_slice(), rng))
        .collect();
    let mut acc: DVector<f64> = DVector::zeros(counts.len());
    for (l, &m) in counts.iter().enumerate() {
        for _ in 0..m {
            acc[l] += exponential(rng, 1.0);
        }
    }
    for &l in &cats_drawn {
        acc[l] += exponential(rng, rate);
    }
    let total = acc.sum();
    Ok(Multinomial::clip_to_interior(&(acc / total)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        FixedLambda, GammaPoissonConditional, GammaPrior, GammaRateConditional, PoissonRate,
    };
    use rand_distr::{Distribution, Poisson};

    fn gp_spec(n: usize, seed: u64) -> HierarchicalSpec {
        let mut rng = RngStream::new(seed, 0).rng();
        let groups = [1.0, 2.0, 4.0]
            .iter()
            .enumerate()
            .map(|(k, &th)| {
                let p = Poisson::new(th).unwrap();
                let x: Vec<f64> = (0..n).map(|_| p.sample(&mut rng)).collect();
                Group {
                    id: 10 + k as u64,
                    data: Dataset::from_column(&x),
                }
            })
            .collect();
        HierarchicalSpec::new(
            groups,
            Arc::new(PoissonRate::new()),
            Arc::new(GammaRateConditional { alpha: 2.0 }),
        )
        .unwrap()
        .with_conditional(Arc::new(GammaPoissonConditional {
            alpha0: 9.0,
            beta0: 3.0,
            alpha: 2.0,
        }))
    }

    #[test]
    fn missing_conditional_is_config_error() {
        let mut spec = gp_spec(20, 1);
        spec.lambda_conditional = None;
        let err = sample_hier_penalized(&spec, None, &RunConfig::new(5, 0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let d = Dataset::from_column(&[1.0]);
        let groups = vec![
            Group {
                id: 1,
                data: d.clone(),
            },
            Group { id: 1, data: d },
        ];
        assert!(HierarchicalSpec::new(
            groups,
            Arc::new(PoissonRate::new()),
            Arc::new(GammaRateConditional { alpha: 2.0 })
        )
        .is_err());
    }

    #[test]
    fn aligned_shapes_and_positive_draws() {
        let spec = gp_spec(50, 2);
        let h = sample_hier_penalized(&spec, None, &RunConfig::new(40, 3)).unwrap();
        assert_eq!(h.n_draws(), 40);
        assert_eq!(h.theta_draws.len(), 3);
        assert!(h
            .theta_draws
            .iter()
            .all(|m| m.nrows() == 40 && m.iter().all(|&v| v > 0.0)));
        assert!(h.lambda_bar.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn group_permutation_is_equivariant() {
        let spec = gp_spec(30, 4);
        let mut perm = spec.clone();
        perm.groups.reverse();
        let run = RunConfig::new(10, 5);
        let a = sample_hier_penalized(&spec, None, &run).unwrap();
        let b = sample_hier_penalized(&perm, None, &run).unwrap();
        assert_eq!(a.lambda_tilde, b.lambda_tilde);
        for k in 0..3 {
            assert_eq!(a.theta_draws[k], b.theta_draws[2 - k]);
        }
        let gp = Arc::new(GammaPrior::scalar(9.0, 3.0).unwrap());
        let a = sample_hier_large_k(
            &spec.clone().with_hyperprior(gp.clone()).unwrap(),
            None,
            None,
            &run,
        )
        .unwrap();
        let b = sample_hier_large_k(&perm.with_hyperprior(gp).unwrap(), None, None, &run).unwrap();
        assert_eq!(a.lambda_tilde, b.lambda_tilde);
        assert_eq!(a.theta_draws[0], b.theta_draws[2]);
    }

    #[test]
    fn fixed_lambda_passes_through() {
        let spec =
            gp_spec(30, 6).with_conditional(Arc::new(FixedLambda(DVector::from_element(1, 0.7))));
        let h = sample_hier_penalized(&spec, None, &RunConfig::new(8, 1)).unwrap();
        assert!(h
            .lambda_bar
            .iter()
            .chain(h.lambda_tilde.iter())
            .all(|&v| v == 0.7));
    }

    #[test]
    fn large_k_rank_error() {
        let spec = gp_spec(30, 7);
        let d = DirichletConditional { k: 3 };
        let mut s2 = spec.clone();
        s2.g = Arc::new(GammaRateConditional { alpha: 2.0 });
        assert!(sample_hier_large_k(&s2, None, None, &RunConfig::new(4, 0)).is_ok());
        // Three groups cannot identify a three-dimensional λ.
        let hats: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_element(3, 1.0 / 3.0))
            .collect();
        let g: Arc<dyn ConditionalPrior> = Arc::new(d);
        let err = lambda_level(
            &g,
            None,
            &hats,
            None,
            DVector::from_element(3, 1.0),
            &SolveConfig::default(),
        );
        assert!(matches!(err, Err(Error::Rank(_))));
    }

    #[test]
    fn allocation_single_group_vertex() {
        let data = AllocationData::new(vec![vec![500, 0, 0, 0, 0, 0]], Some(&[500])).unwrap();
        let wg = PenaltyWeight::Scalar(1.0);
        let h =
            sample_dirichlet_allocation(&data, 1.0, 20, Some(wg), &RunConfig::new(30, 2)).unwrap();
        assert!(h.nonconverged.is_empty(), "{:?}", h.failures);
        assert!(h.theta_draws[0].column(0).iter().all(|&v| v > 0.9));
        assert!(matches!(
            sample_dirichlet_allocation(&data, 1.0, 20, None, &RunConfig::new(3, 2)),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn allocation_small_recovers_scale() {
        let lambda = [3.0, 2.0, 1.0];
        let mut rng = RngStream::new(9, 0).rng();
        let counts: Vec<Vec<u64>> = (0..60)
            .map(|_| {
                let th = sample_dirichlet(&lambda, &mut rng).unwrap();
                let mut c = vec![0u64; 3];
                for _ in 0..300 {
                    c[categorical(th.as_slice(), &mut rng)] += 1;
                }
                c
            })
            .collect();
        let data = AllocationData::new(counts, None).unwrap();
        let h = sample_dirichlet_allocation(&data, 10.0, 30, None, &RunConfig::new(60, 1)).unwrap();
        let m = h.lambda_tilde_set().mean();
        for l in 0..3 {
            assert!((m[l] / lambda[l] - 1.0).abs() < 0.5, "{m}");
        }
    }

    #[test]
    fn allocation_rejects_bad_totals() {
        assert!(AllocationData::new(vec![vec![1, 2]], Some(&[4])).is_err());
        assert!(AllocationData::new(vec![vec![0, 0]], None).is_err());
    }
}
