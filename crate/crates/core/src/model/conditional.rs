//! Conditional priors g(θ|λ) and the exact conditionals p(λ|θ₁..θ_K) used by hierarchical samplers.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::priors::sample_dirichlet;
use super::{Dataset, Domain, ParametricModel, Prior};
use crate::special::{digamma, ln_gamma, trigamma};

/// A conditional density g(θ|λ), differentiable in both arguments.
pub trait ConditionalPrior: Send + Sync {
    fn name(&self) -> String;
    fn theta_dim(&self) -> usize;
    fn lambda_dim(&self) -> usize;
    fn theta_domain(&self) -> Domain;
    fn lambda_domain(&self) -> Domain;
    fn logpdf(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> f64;
    fn grad_theta(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64>;
    fn hess_theta(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64>;
    fn grad_lambda(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64>;
    fn hess_lambda(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64>;
    /// Per-coordinate split of log g in θ, when it factorizes.
    fn coord_logpdf_theta(
        &self,
        theta: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        (self.theta_dim() == 1).then(|| DVector::from_element(1, self.logpdf(theta, lambda)))
    }
    fn sample_theta(&self, _lambda: &DVector<f64>, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }
}

/// θ ~ Gamma(α, rate λ) with known shape α.
#[derive(Debug, Clone)]
pub struct GammaRateConditional {
    pub alpha: f64,
}

impl ConditionalPrior for GammaRateConditional {
    fn name(&self) -> String {
        format!("gamma_rate(alpha={})", self.alpha)
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn lambda_dim(&self) -> usize {
        1
    }
    fn theta_domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn lambda_domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn logpdf(&self, t: &DVector<f64>, l: &DVector<f64>) -> f64 {
        let a = self.alpha;
        a * l[0].ln() - ln_gamma(a) + (a - 1.0) * t[0].ln() - l[0] * t[0]
    }
    fn grad_theta(&self, t: &DVector<f64>, l: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, (self.alpha - 1.0) / t[0] - l[0])
    }
    fn hess_theta(&self, t: &DVector<f64>, _l: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -(self.alpha - 1.0) / (t[0] * t[0]))
    }
    fn grad_lambda(&self, t: &DVector<f64>, l: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.alpha / l[0] - t[0])
    }
    fn hess_lambda(&self, _t: &DVector<f64>, l: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -self.alpha / (l[0] * l[0]))
    }
    fn sample_theta(&self, l: &DVector<f64>, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let g = Gamma::new(self.alpha, 1.0 / l[0]).ok()?;
        Some(DVector::from_element(1, g.sample(rng)))
    }
}

/// θ ~ N(λ, v) with known variance v.
#[derive(Debug, Clone)]
pub struct NormalMeanConditional {
    pub var: f64,
}

impl ConditionalPrior for NormalMeanConditional {
    fn name(&self) -> String {
        format!("normal_mean(var={})", self.var)
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn lambda_dim(&self) -> usize {
        1
    }
    fn theta_domain(&self) -> Domain {
        Domain::Unconstrained
    }
    fn lambda_domain(&self) -> Domain {
        Domain::Unconstrained
    }
    fn logpdf(&self, t: &DVector<f64>, l: &DVector<f64>) -> f64 {
        let r = t[0] - l[0];
        -0.5 * (2.0 * PI * self.var).ln() - r * r / (2.0 * self.var)
    }
    fn grad_theta(&self, t: &DVector<f64>, l: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, (l[0] - t[0]) / self.var)
    }
    fn hess_theta(&self, _t: &DVector<f64>, _l: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -1.0 / self.var)
    }
    fn grad_lambda(&self, t: &DVector<f64>, l: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, (t[0] - l[0]) / self.var)
    }
    fn hess_lambda(&self, _t: &DVector<f64>, _l: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -1.0 / self.var)
    }
    fn sample_theta(&self, l: &DVector<f64>, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let z: f64 = StandardNormal.sample(rng);
        Some(DVector::from_element(1, l[0] + self.var.sqrt() * z))
    }
}

/// θ ~ Dirichlet(λ) on the k-simplex, λ in the positive orthant.
#[derive(Debug, Clone)]
pub struct DirichletConditional {
    pub k: usize,
}

impl ConditionalPrior for DirichletConditional {
    fn name(&self) -> String {
        format!("dirichlet(k={})", self.k)
    }
    fn theta_dim(&self) -> usize {
        self.k
    }
    fn lambda_dim(&self) -> usize {
        self.k
    }
    fn theta_domain(&self) -> Domain {
        Domain::Simplex
    }
    fn lambda_domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn logpdf(&self, t: &DVector<f64>, l: &DVector<f64>) -> f64 {
        let mut v = ln_gamma(l.sum());
        for j in 0..self.k {
            v += (l[j] - 1.0) * t[j].ln() - ln_gamma(l[j]);
        }
        v
    }
    fn grad_theta(&self, t: &DVector<f64>, l: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.k, |j, _| (l[j] - 1.0) / t[j])
    }
    fn hess_theta(&self, t: &DVector<f64>, l: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(self.k, |j, _| {
            -(l[j] - 1.0) / (t[j] * t[j])
        }))
    }
    fn grad_lambda(&self, t: &DVector<f64>, l: &DVector<f64>) -> DVector<f64> {
        let ps = digamma(l.sum());
        DVector::from_fn(self.k, |j, _| ps - digamma(l[j]) + t[j].ln())
    }
    fn hess_lambda(&self, _t: &DVector<f64>, l: &DVector<f64>) -> DMatrix<f64> {
        let ts = trigamma(l.sum());
        DMatrix::from_fn(self.k, self.k, |i, j| {
            if i == j {
                ts - trigamma(l[j])
            } else {
                ts
            }
        })
    }
    fn coord_logpdf_theta(&self, t: &DVector<f64>, l: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_fn(self.k, |j, _| (l[j] - 1.0) * t[j].ln()))
    }
    fn sample_theta(&self, l: &DVector<f64>, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        sample_dirichlet(l.as_slice(), rng)
    }
}

/// g viewed as a likelihood for λ with the group parameters θ_k as observations.
#[derive(Clone)]
pub struct LambdaModel {
    pub g: Arc<dyn ConditionalPrior>,
}

impl LambdaModel {
    pub fn new(g: Arc<dyn ConditionalPrior>) -> Self {
        Self { g }
    }
}

impl ParametricModel for LambdaModel {
    fn name(&self) -> String {
        format!("lambda_of[{}]", self.g.name())
    }
    fn dim(&self) -> usize {
        self.g.lambda_dim()
    }
    fn obs_dim(&self) -> usize {
        self.g.theta_dim()
    }
    fn domain(&self) -> Domain {
        self.g.lambda_domain()
    }
    fn loglik(&self, x: &[f64], l: &DVector<f64>) -> f64 {
        self.g.logpdf(&DVector::from_column_slice(x), l)
    }
    fn grad(&self, x: &[f64], l: &DVector<f64>) -> DVector<f64> {
        self.g.grad_lambda(&DVector::from_column_slice(x), l)
    }
    fn hess(&self, x: &[f64], l: &DVector<f64>) -> DMatrix<f64> {
        self.g.hess_lambda(&DVector::from_column_slice(x), l)
    }
}

/// g(·|λ) with λ fixed, viewed as a prior on θ.
#[derive(Clone)]
pub struct ThetaPrior {
    pub g: Arc<dyn ConditionalPrior>,
    pub lambda: DVector<f64>,
}

impl ThetaPrior {
    pub fn new(g: Arc<dyn ConditionalPrior>, lambda: DVector<f64>) -> Self {
        Self { g, lambda }
    }
}

impl Prior for ThetaPrior {
    fn dim(&self) -> usize {
        self.g.theta_dim()
    }
    fn support(&self) -> Domain {
        self.g.theta_domain()
    }
    fn factorized(&self) -> bool {
        self.g
            .coord_logpdf_theta(
                &DVector::from_element(self.dim(), 1.0 / self.dim() as f64),
                &self.lambda,
            )
            .is_some()
    }
    fn logpdf(&self, t: &DVector<f64>) -> f64 {
        self.g.logpdf(t, &self.lambda)
    }
    fn grad(&self, t: &DVector<f64>) -> DVector<f64> {
        self.g.grad_theta(t, &self.lambda)
    }
    fn hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        self.g.hess_theta(t, &self.lambda)
    }
    fn coord_logpdf(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        self.g.coord_logpdf_theta(t, &self.lambda)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        self.g.sample_theta(&self.lambda, rng)
    }
}

/// Exact sampler for p(λ | θ₁, …, θ_K).
pub trait LambdaConditional: Send + Sync {
    fn sample(&self, thetas: &[DVector<f64>], rng: &mut dyn RngCore) -> DVector<f64>;
}

/// Gamma(α₀, β₀) hyperprior on the rate λ of Gamma(α, λ) group parameters:
/// λ | θ ~ Gamma(α₀ + Kα, β₀ + Σθ_k).
#[derive(Debug, Clone)]
pub struct GammaPoissonConditional {
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha: f64,
}

impl GammaPoissonConditional {
    pub fn posterior(&self, thetas: &[DVector<f64>]) -> (f64, f64) {
        let k = thetas.len() as f64;
        let s: f64 = thetas.iter().map(|t| t[0]).sum();
        (self.alpha0 + k * self.alpha, self.beta0 + s)
    }
}

impl LambdaConditional for GammaPoissonConditional {
    fn sample(&self, thetas: &[DVector<f64>], rng: &mut dyn RngCore) -> DVector<f64> {
        let (shape, rate) = self.posterior(thetas);
        let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
        DVector::from_element(1, g.sample(rng))
    }
}

/// N(m, v) hyperprior on the mean λ of N(λ, s²) group parameters.
#[derive(Debug, Clone)]
pub struct GaussianGaussianConditional {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub group_var: f64,
}

impl GaussianGaussianConditional {
    pub fn posterior(&self, thetas: &[DVector<f64>]) -> (f64, f64) {
        let prec = 1.0 / self.prior_var + thetas.len() as f64 / self.group_var;
        let s: f64 = thetas.iter().map(|t| t[0]).sum();
        (
            (self.prior_mean / self.prior_var + s / self.group_var) / prec,
            1.0 / prec,
        )
    }
}

impl LambdaConditional for GaussianGaussianConditional {
    fn sample(&self, thetas: &[DVector<f64>], rng: &mut dyn RngCore) -> DVector<f64> {
        let (m, v) = self.posterior(thetas);
        let z: f64 = StandardNormal.sample(rng);
        DVector::from_element(1, m + v.sqrt() * z)
    }
}

/// A degenerate conditional that always returns the same λ.
#[derive(Debug, Clone)]
pub struct FixedLambda(pub DVector<f64>);

impl LambdaConditional for FixedLambda {
    fn sample(&self, _thetas: &[DVector<f64>], _rng: &mut dyn RngCore) -> DVector<f64> {
        self.0.clone()
    }
}

/// Stacks group parameters as rows of a dataset for the λ-level likelihood.
pub fn thetas_dataset(thetas: &[DVector<f64>]) -> Dataset {
    let d = thetas[0].len();
    let mut v = Vec::with_capacity(thetas.len() * d);
    for t in thetas {
        v.extend(t.iter());
    }
    Dataset::new(v, d).expect("finite group parameters")
}
