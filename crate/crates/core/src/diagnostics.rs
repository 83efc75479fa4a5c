//! Distances between draw sets, conjugate Gaussian reference posteriors and
//! Monte-Carlo predictive risk.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::mean_cov;
use crate::model::{Dataset, GaussianPrior, ParametricModel};
use crate::rng::{derive_seed, RngStream};
use crate::samplers::{sample_wlb, Algorithm, DrawSet, Hyper, ParamSampler, RunConfig};
use crate::solve::SolveConfig;

/// Moment fit of a draw set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_draws: usize,
}

impl GaussianSummary {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n_draws: usize) -> Self {
        Self { mean, cov, n_draws }
    }

    pub fn from_draws(d: &DrawSet) -> Result<Self> {
        if d.n_draws() < 2 {
            return Err(Error::Empty("need at least two draws".into()));
        }
        let (mean, cov) = mean_cov(&d.draws);
        Ok(Self {
            mean,
            cov,
            n_draws: d.n_draws(),
        })
    }
}

/// Two-sample Kolmogorov–Smirnov statistic sup|F_a − F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("KS sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// KS statistic; for d > 1 the maximum of the per-coordinate statistics.
pub fn ks_dissimilarity(a: &DrawSet, b: &DrawSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let mut d: f64 = 0.0;
    for k in 0..a.dim() {
        d = d.max(ks_statistic(&a.column(k), &b.column(k))?);
    }
    Ok(d)
}

fn log_det(m: &DMatrix<f64>) -> Result<f64> {
    let c = Cholesky::new(m.clone()).ok_or_else(|| Error::Singular("fitted covariance".into()))?;
    Ok(2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Bhattacharyya distance between two Gaussians.
pub fn bhattacharyya(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::Dimension {
            expected: a.mean.len(),
            got: b.mean.len(),
        });
    }
    let avg = (&a.cov + &b.cov) * 0.5;
    let chol =
        Cholesky::new(avg.clone()).ok_or_else(|| Error::Singular("averaged covariance".into()))?;
    let delta = &a.mean - &b.mean;
    let quad = delta.dot(&chol.solve(&delta));
    let v = quad / 8.0 + 0.5 * (log_det(&avg)? - 0.5 * (log_det(&a.cov)? + log_det(&b.cov)?));
    Ok(v.max(0.0))
}

/// Bhattacharyya distance between Gaussian moment fits of two draw sets.
pub fn bhattacharyya_gaussian(a: &DrawSet, b: &DrawSet) -> Result<f64> {
    for s in [a, b] {
        if s.n_draws() < s.dim() + 1 {
            return Err(Error::Empty("need at least d + 1 draws".into()));
        }
    }
    bhattacharyya(
        &GaussianSummary::from_draws(a)?,
        &GaussianSummary::from_draws(b)?,
    )
}

/// Conjugate Gaussian reference posteriors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateKind {
    Bayes,
    /// Likelihood precision multiplied by η.
    Power(f64),
    /// Pooled posteriors on `bags` bootstrap resamples of size `b`.
    BayesBag {
        b: usize,
        bags: usize,
    },
}

/// A multivariate normal posterior N(mean, cov).
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

impl GaussianPosterior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let c = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Singular("posterior covariance".into()))?;
        Ok(Self {
            mean,
            cov,
            chol_l: c.l(),
        })
    }

    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(&mut *rng));
        &self.mean + &self.chol_l * z
    }
}

impl ParamSampler for GaussianPosterior {
    fn sample_param(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        Some(self.draw(rng))
    }
}

/// Posterior of a Gaussian mean with known noise covariance Σ under a Gaussian
/// prior, with the likelihood raised to the power η.
pub fn gaussian_power_posterior(
    noise_cov: &DMatrix<f64>,
    prior: &GaussianPrior,
    data: &Dataset,
    eta: f64,
) -> Result<GaussianPosterior> {
    if !(eta > 0.0) {
        return Err(Error::Config("power η must be positive".into()));
    }
    let d = noise_cov.nrows();
    if data.obs_dim() != d || prior.mean().len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: data.obs_dim(),
        });
    }
    let noise_prec = Cholesky::new(noise_cov.clone())
        .ok_or_else(|| Error::Singular("noise covariance".into()))?
        .inverse();
    let n = data.n() as f64;
    let sum = DVector::from_fn(d, |j, _| data.rows().map(|r| r[j]).sum::<f64>());
    let prec = prior.precision() + &noise_prec * (eta * n);
    let cov = Cholesky::new(prec)
        .ok_or_else(|| Error::Singular("posterior precision".into()))?
        .inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let mean = &cov * (prior.precision() * prior.mean() + &noise_prec * sum * eta);
    GaussianPosterior::new(mean, cov)
}

/// Draws `n_draws` values from a posterior sampler, draw j on stream j.
pub fn sampler_draws(
    sampler: &dyn ParamSampler,
    n_draws: usize,
    seed: u64,
    algorithm: Algorithm,
    hyper: Hyper,
) -> Result<DrawSet> {
    let rows = draw_range(sampler, seed, 0..n_draws)?;
    DrawSet::from_rows(&rows, algorithm, hyper, seed)
}

fn draw_range(
    sampler: &dyn ParamSampler,
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<Vec<DVector<f64>>> {
    range
        .map(|j| {
            sampler
                .sample_param(&mut RngStream::new(seed, j as u64).rng())
                .ok_or_else(|| Error::Solver("reference sampler failed".into()))
        })
        .collect()
}

/// BayesBag: `bags` bootstrap resamples of size `b`, each contributing an
/// equal share of the `n_draws` posterior draws from `posterior(resample)`.
pub fn bayesbag_draws(
    data: &Dataset,
    b: usize,
    bags: usize,
    n_draws: usize,
    seed: u64,
    posterior: &dyn Fn(&Dataset) -> Result<Box<dyn ParamSampler>>,
) -> Result<DrawSet> {
    if b == 0 || bags == 0 || bags > n_draws || data.n() == 0 {
        return Err(Error::Config(
            "bayesbag needs b ≥ 1, 1 ≤ bags ≤ N and data".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n_draws);
    let mut start = 0;
    for bag in 0..bags {
        let count = n_draws / bags + usize::from(bag < n_draws % bags);
        let mut rng = RngStream::new(derive_seed(seed, 0xBA6, bag as u64), 0).rng();
        let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..data.n())).collect();
        let post = posterior(&data.select(&idx))?;
        rows.extend(draw_range(post.as_ref(), seed, start..start + count)?);
        start += count;
    }
    DrawSet::from_rows(
        &rows,
        Algorithm::BayesBag,
        Hyper::BayesBag { b, bags },
        seed,
    )
}

/// Draws from a conjugate reference posterior for a Gaussian mean model.
pub fn conjugate_posterior(
    kind: ConjugateKind,
    model: &dyn ParametricModel,
    prior: &GaussianPrior,
    data: &Dataset,
    n_draws: usize,
    seed: u64,
) -> Result<DrawSet> {
    let noise = model.gaussian_noise_cov().ok_or_else(|| {
        Error::Unsupported(format!(
            "{} has no conjugate Gaussian posterior",
            model.name()
        ))
    })?;
    if n_draws == 0 || data.n() == 0 {
        return Err(Error::Empty("draws or data".into()));
    }
    match kind {
        ConjugateKind::Bayes => {
            let post = gaussian_power_posterior(&noise, prior, data, 1.0)?;
            sampler_draws(&post, n_draws, seed, Algorithm::Bayes, Hyper::None)
        }
        ConjugateKind::Power(eta) => {
            let post = gaussian_power_posterior(&noise, prior, data, eta)?;
            sampler_draws(&post, n_draws, seed, Algorithm::Power, Hyper::Eta(eta))
        }
        ConjugateKind::BayesBag { b, bags } => bayesbag_draws(data, b, bags, n_draws, seed, &|d| {
            Ok(Box::new(gaussian_power_posterior(&noise, prior, d, 1.0)?) as Box<dyn ParamSampler>)
        }),
    }
}

/// Posterior of a 1-D Gaussian mean θ > 0 under a Gamma(a, b) prior with
/// known noise variance and likelihood power η:
/// p(θ) ∝ θ^{a−1} e^{−bθ} exp{−ηn(θ − x̄)²/(2σ²)}.
///
/// Sampled exactly by rejection from a Gaussian envelope built on the tangent
/// of (a−1)log θ at the mode (valid for a ≥ 1).
#[derive(Debug, Clone)]
pub struct GammaGaussianPosterior {
    shape: f64,
    mode: f64,
    prop_mean: f64,
    prop_sd: f64,
}

impl GammaGaussianPosterior {
    pub fn new(shape: f64, rate: f64, data: &Dataset, noise_var: f64, eta: f64) -> Result<Self> {
        if !(shape >= 1.0 && rate > 0.0 && noise_var > 0.0 && eta > 0.0) {
            return Err(Error::Config(
                "need shape ≥ 1 and positive rate, variance and power".into(),
            ));
        }
        if data.obs_dim() != 1 || data.n() == 0 {
            return Err(Error::Dimension {
                expected: 1,
                got: data.obs_dim(),
            });
        }
        let n = data.n() as f64;
        let xbar = data.column(0).iter().sum::<f64>() / n;
        let prec = eta * n / noise_var;
        // Mode: prec·θ² + (b − prec·x̄)θ − (a − 1) = 0, positive root.
        let (qa, qb, qc) = (prec, rate - prec * xbar, -(shape - 1.0));
        let mode = if shape > 1.0 {
            (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
        } else {
            (xbar - rate / prec).max(f64::MIN_POSITIVE)
        };
        let slope = if shape > 1.0 {
            (shape - 1.0) / mode
        } else {
            0.0
        };
        Ok(Self {
            shape,
            mode,
            prop_mean: xbar + (slope - rate) / prec,
            prop_sd: prec.sqrt().recip(),
        })
    }

    pub fn mode(&self) -> f64 {
        self.mode
    }
}

impl ParamSampler for GammaGaussianPosterior {
    fn sample_param(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let a1 = self.shape - 1.0;
        for _ in 0..10_000 {
            let z: f64 = StandardNormal.sample(&mut *rng);
            let t = self.prop_mean + self.prop_sd * z;
            if t <= 0.0 {
                continue;
            }
            let log_acc = a1 * ((t / self.mode).ln() - (t - self.mode) / self.mode);
            if crate::rng::uniform_open0(rng).ln() <= log_acc {
                return Some(DVector::from_element(1, t));
            }
        }
        None
    }
}

/// Generative truth p*: draws observations and evaluates log p*.
pub trait Truth: Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64>;
    fn logpdf(&self, x: &[f64]) -> f64;
}

/// One-dimensional N(mean, var) truth.
#[derive(Debug, Clone, Copy)]
pub struct GaussianTruth {
    pub mean: f64,
    pub var: f64,
}

impl Truth for GaussianTruth {
    fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let z: f64 = StandardNormal.sample(rng);
        vec![self.mean + self.var.sqrt() * z]
    }
    fn logpdf(&self, x: &[f64]) -> f64 {
        let r = x[0] - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.var).ln() - r * r / (2.0 * self.var)
    }
}

/// A log predictive density x ↦ log p̂(x).
pub type LogPredictive<'a> = Box<dyn Fn(&[f64]) -> f64 + Send + Sync + 'a>;

/// Minimum number of draws for a mixture predictive.
pub const MIN_MIXTURE_DRAWS: usize = 500;

/// Equal-weight mixture (1/N)Σ f(x|θ̃⁽ʲ⁾), evaluated with log-sum-exp.
pub fn mixture_predictive<'a>(
    model: &'a dyn ParametricModel,
    draws: &DrawSet,
) -> Result<LogPredictive<'a>> {
    if draws.n_draws() < MIN_MIXTURE_DRAWS {
        return Err(Error::Config(format!(
            "mixture predictive needs at least {MIN_MIXTURE_DRAWS} draws"
        )));
    }
    let thetas: Vec<DVector<f64>> = (0..draws.n_draws())
        .map(|i| draws.draws.row(i).transpose())
        .collect();
    let log_n = (thetas.len() as f64).ln();
    Ok(Box::new(move |x| {
        let lls: Vec<f64> = thetas.iter().map(|t| model.loglik(x, t)).collect();
        let m = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return m;
        }
        m + lls.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - log_n
    }))
}

/// A method mapping a dataset to a predictive density.
pub trait RiskMethod: Send + Sync {
    fn predictive<'a>(&'a self, data: &Dataset, seed: u64) -> Result<LogPredictive<'a>>;
}

/// Mixture predictive over weighted-likelihood-bootstrap draws.
pub struct WlbPredictive<M: ParametricModel> {
    pub model: M,
    pub n_draws: usize,
    pub solve: SolveConfig,
}

impl<M: ParametricModel> RiskMethod for WlbPredictive<M> {
    fn predictive<'a>(&'a self, data: &Dataset, seed: u64) -> Result<LogPredictive<'a>> {
        let run = RunConfig {
            n_draws: self.n_draws,
            seed,
            solve: self.solve,
            workers: Some(1),
        };
        let draws = sample_wlb(&self.model, data, &run)?;
        mixture_predictive(&self.model, &draws)
    }
}

/// Closed-form predictive N(m, σ² + v) of a 1-D Gaussian-location power posterior.
pub struct PowerPosteriorPredictive {
    pub noise_var: f64,
    pub prior: GaussianPrior,
    pub eta: f64,
}

impl RiskMethod for PowerPosteriorPredictive {
    fn predictive<'a>(&'a self, data: &Dataset, _seed: u64) -> Result<LogPredictive<'a>> {
        let noise = DMatrix::from_element(1, 1, self.noise_var);
        let post = gaussian_power_posterior(&noise, &self.prior, data, self.eta)?;
        let truth = GaussianTruth {
            mean: post.mean[0],
            var: self.noise_var + post.cov[(0, 0)],
        };
        Ok(Box::new(move |x| truth.logpdf(x)))
    }
}

/// The truth itself as predictive; its risk is zero.
pub struct OraclePredictive<T: Truth>(pub T);

impl<T: Truth> RiskMethod for OraclePredictive<T> {
    fn predictive<'a>(&'a self, _data: &Dataset, _seed: u64) -> Result<LogPredictive<'a>> {
        Ok(Box::new(move |x| self.0.logpdf(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskEstimate {
    pub risk: f64,
    pub se: f64,
    /// Evaluation points whose predictive density was clipped at 1e−300.
    pub clipped: usize,
}

const LOG_FLOOR: f64 = -690.775_527_898_213_7; // ln 1e-300

struct RepOutcome {
    kls: Vec<f64>,
    clipped: usize,
}

fn risk_reps(
    methods: &[&dyn RiskMethod],
    truth: &dyn Truth,
    n: usize,
    reps: usize,
    m_eval: usize,
    seed: u64,
) -> Result<Vec<RepOutcome>> {
    if n == 0 || reps < 2 || m_eval == 0 {
        return Err(Error::Config(
            "risk estimation needs n ≥ 1, reps ≥ 2, m_eval ≥ 1".into(),
        ));
    }
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(derive_seed(seed, 0x815C, r as u64), 0).rng();
            let mut xs = Vec::with_capacity(n);
            for _ in 0..n {
                xs.extend(truth.sample(&mut rng));
            }
            let dim = xs.len() / n;
            let data = Dataset::new(xs, dim)?;
            let evals: Vec<Vec<f64>> = (0..m_eval).map(|_| truth.sample(&mut rng)).collect();
            let lp_true: Vec<f64> = evals.iter().map(|x| truth.logpdf(x)).collect();
            let mut kls = Vec::with_capacity(methods.len());
            let mut clipped = 0;
            for (k, method) in methods.iter().enumerate() {
                let pred =
                    method.predictive(&data, derive_seed(seed, 0x3E7 + k as u64, r as u64))?;
                let mut acc = 0.0;
                for (x, lt) in evals.iter().zip(&lp_true) {
                    let mut lp = pred(x);
                    if !(lp >= LOG_FLOOR) {
                        lp = LOG_FLOOR;
                        clipped += 1;
                    }
                    acc += lt - lp;
                }
                kls.push(acc / m_eval as f64);
            }
            Ok(RepOutcome { kls, clipped })
        })
        .collect()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Nested Monte-Carlo estimate of E[KL(p* ‖ p̂)] over `reps` datasets of size n.
pub fn mc_risk_estimate(
    method: &dyn RiskMethod,
    truth: &dyn Truth,
    n: usize,
    reps: usize,
    m_eval: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    let out = risk_reps(&[method], truth, n, reps, m_eval, seed)?;
    let kl: Vec<f64> = out.iter().map(|o| o.kls[0]).collect();
    let clipped: usize = out.iter().map(|o| o.clipped).sum();
    if clipped > 0 {
        warn!("{clipped} predictive densities clipped at 1e-300");
    }
    let (risk, se) = mean_se(&kl);
    Ok(RiskEstimate { risk, se, clipped })
}

/// Paired estimates on shared datasets and evaluation points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedRisk {
    pub a: RiskEstimate,
    pub b: RiskEstimate,
    /// risk(a) − risk(b) with its paired standard error.
    pub difference: RiskEstimate,
}

pub fn mc_risk_difference(
    a: &dyn RiskMethod,
    b: &dyn RiskMethod,
    truth: &dyn Truth,
    n: usize,
    reps: usize,
    m_eval: usize,
    seed: u64,
) -> Result<PairedRisk> {
    let out = risk_reps(&[a, b], truth, n, reps, m_eval, seed)?;
    let clipped: usize = out.iter().map(|o| o.clipped).sum();
    if clipped > 0 {
        warn!("{clipped} predictive densities clipped at 1e-300");
    }
    let ka: Vec<f64> = out.iter().map(|o| o.kls[0]).collect();
    let kb: Vec<f64> = out.iter().map(|o| o.kls[1]).collect();
    let kd: Vec<f64> = ka.iter().zip(&kb).map(|(x, y)| x - y).collect();
    let est = |v: &[f64]| {
        let (risk, se) = mean_se(v);
        RiskEstimate { risk, se, clipped }
    };
    Ok(PairedRisk {
        a: est(&ka),
        b: est(&kb),
        difference: est(&kd),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GaussianLocation;

    fn set(rows: &[f64]) -> DrawSet {
        let v: Vec<DVector<f64>> = rows.iter().map(|&x| DVector::from_element(1, x)).collect();
        DrawSet::from_rows(&v, Algorithm::Wlb, Hyper::None, 0).unwrap()
    }

    #[test]
    fn ks_examples() {
        let a = set(&[0.1, 0.5, 0.2, 0.9]);
        assert_eq!(ks_dissimilarity(&a, &a).unwrap(), 0.0);
        assert_eq!(
            ks_dissimilarity(&set(&[0.0; 20]), &set(&[1.0; 20])).unwrap(),
            1.0
        );
        assert_eq!(ks_statistic(&[1.0, 2.0], &[1.5]).unwrap(), 0.5);
        assert!(ks_statistic(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_brute_force() {
        let a = [0.3, 1.2, 1.2, -0.5, 2.0, 0.0];
        let b = [1.2, 0.1, 3.0, -1.0];
        let ecdf =
            |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let want = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert!((ks_statistic(&a, &b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn bhattacharyya_examples() {
        let s = |m: f64, v: f64| {
            GaussianSummary::new(
                DVector::from_element(1, m),
                DMatrix::from_element(1, 1, v),
                10,
            )
        };
        assert_eq!(bhattacharyya(&s(0.3, 2.0), &s(0.3, 2.0)).unwrap(), 0.0);
        assert!((bhattacharyya(&s(0.0, 1.0), &s(2.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let want = 0.5 * (1.5 / 2f64.sqrt()).ln();
        assert!((bhattacharyya(&s(0.0, 1.0), &s(0.0, 2.0)).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.029446).abs() < 1e-5);
    }

    #[test]
    fn power_one_is_bayes() {
        let m = GaussianLocation::new(1.0);
        let p = GaussianPrior::scalar(0.0, 100.0).unwrap();
        let d = Dataset::from_column(&[0.5, 1.5, -0.2]);
        let a = conjugate_posterior(ConjugateKind::Bayes, &m, &p, &d, 10, 4).unwrap();
        let b = conjugate_posterior(ConjugateKind::Power(1.0), &m, &p, &d, 10, 4).unwrap();
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn power_posterior_variance() {
        let p = GaussianPrior::scalar(0.0, 100.0).unwrap();
        let d = Dataset::from_column(&vec![0.25; 200]);
        for eta in [0.5, 1.0, 2.0] {
            let post =
                gaussian_power_posterior(&DMatrix::from_element(1, 1, 1.0), &p, &d, eta).unwrap();
            assert!((post.cov[(0, 0)] - 1.0 / (200.0 * eta + 0.01)).abs() < 1e-15);
            assert!((post.mean[0] - 200.0 * eta * 0.25 / (200.0 * eta + 0.01)).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_gaussian_matches_quadrature() {
        let x: Vec<f64> = (0..40).map(|i| 0.4 + 0.02 * i as f64).collect();
        let d = Dataset::from_column(&x);
        let (a, b, s2, eta) = (5.0, 3.0, 2.0, 1.0);
        let post = GammaGaussianPosterior::new(a, b, &d, s2, eta).unwrap();
        let xbar = x.iter().sum::<f64>() / 40.0;
        let logp = |t: f64| (a - 1.0) * t.ln() - b * t - 40.0 * (t - xbar).powi(2) / (2.0 * s2);
        let h = 1e-4;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 1..40_000 {
            let t = i as f64 * h;
            let p = logp(t).exp();
            z += p;
            m1 += p * t;
            m2 += p * t * t;
        }
        let (mean, var) = (m1 / z, m2 / z - (m1 / z).powi(2));
        let s = sampler_draws(&post, 20_000, 3, Algorithm::Bayes, Hyper::None).unwrap();
        let se = (var / 20_000.0).sqrt();
        assert!(
            (s.mean()[0] - mean).abs() < 4.0 * se,
            "{} vs {mean}",
            s.mean()[0]
        );
        assert!((s.cov()[(0, 0)] / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn bayesbag_inflates_variance() {
        let m = GaussianLocation::new(1.0);
        let p = GaussianPrior::scalar(0.0, 100.0).unwrap();
        let mut rng = RngStream::new(5, 0).rng();
        let x: Vec<f64> = (0..200).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = Dataset::from_column(&x);
        let bayes = conjugate_posterior(ConjugateKind::Bayes, &m, &p, &d, 2000, 1).unwrap();
        let bag = conjugate_posterior(
            ConjugateKind::BayesBag { b: 200, bags: 50 },
            &m,
            &p,
            &d,
            2000,
            1,
        )
        .unwrap();
        assert_eq!(bag.n_draws(), 2000);
        assert!(bag.cov()[(0, 0)] > bayes.cov()[(0, 0)]);
    }

    #[test]
    fn conjugate_rejects_other_models() {
        let m = crate::model::PoissonRate::new();
        let p = GaussianPrior::scalar(0.0, 1.0).unwrap();
        let d = Dataset::from_column(&[1.0]);
        assert!(matches!(
            conjugate_posterior(ConjugateKind::Bayes, &m, &p, &d, 5, 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn oracle_risk_is_zero() {
        let t = GaussianTruth {
            mean: 0.0,
            var: 1.5,
        };
        let r = mc_risk_estimate(&OraclePredictive(t), &t, 10, 20, 50, 1).unwrap();
        assert_eq!(r.risk, 0.0);
    }

    #[test]
    fn mixture_requires_enough_draws() {
        let m = GaussianLocation::new(1.0);
        assert!(mixture_predictive(&m, &set(&[0.0; 10])).is_err());
        let p = mixture_predictive(&m, &set(&vec![0.0; 600])).unwrap();
        assert!((p(&[0.0]) + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }
}
