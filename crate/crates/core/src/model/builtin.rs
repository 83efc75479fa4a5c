use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Bernoulli as BernoulliDist, Distribution, Gamma, Poisson, StandardNormal};

use super::{Dataset, Derivs, Domain, ParametricModel};
use crate::error::{Error, Result};
use crate::rng::uniform_open0;
use crate::special::ln_gamma;

/// Floor applied to simplex proportions before renormalizing.
pub const MULTINOMIAL_EPS: f64 = 1e-9;

fn mean_column(data: &Dataset, j: usize) -> f64 {
    data.rows().map(|r| r[j]).sum::<f64>() / data.n() as f64
}

/// N(θ, σ²) with known σ², θ ∈ ℝ.
#[derive(Debug, Clone)]
pub struct GaussianLocation {
    pub var: f64,
}

impl GaussianLocation {
    pub fn new(var: f64) -> Self {
        assert!(var > 0.0, "variance must be positive");
        Self { var }
    }
}

impl ParametricModel for GaussianLocation {
    fn name(&self) -> String {
        format!("gaussian_location(var={})", self.var)
    }
    fn dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        Domain::Unconstrained
    }
    fn loglik(&self, x: &[f64], t: &DVector<f64>) -> f64 {
        let r = x[0] - t[0];
        -0.5 * (2.0 * PI * self.var).ln() - r * r / (2.0 * self.var)
    }
    fn grad(&self, x: &[f64], t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, (x[0] - t[0]) / self.var)
    }
    fn hess(&self, _x: &[f64], _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -1.0 / self.var)
    }
    fn third(&self, _x: &[f64], _t: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }
    fn sample_obs(&self, t: &DVector<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let z: f64 = StandardNormal.sample(rng);
        Some(vec![t[0] + self.var.sqrt() * z])
    }
    fn closed_form_mle(&self, data: &Dataset) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, mean_column(data, 0)))
    }
    fn gaussian_noise_cov(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, self.var))
    }
    fn accumulate(&self, x: &[f64], t: &DVector<f64>, w: f64, acc: &mut Derivs) {
        let r = x[0] - t[0];
        acc.value += w * (-0.5 * (2.0 * PI * self.var).ln() - r * r / (2.0 * self.var));
        acc.grad[0] += w * r / self.var;
        acc.hess[(0, 0)] -= w / self.var;
    }
}

/// N(θ, Σ) with known Σ, θ ∈ ℝ^d.
#[derive(Debug, Clone)]
pub struct MvGaussianMean {
    pub cov: DMatrix<f64>,
    prec: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl MvGaussianMean {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        if cov.ncols() != d || d == 0 {
            return Err(Error::Dimension {
                expected: d,
                got: cov.ncols(),
            });
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            prec: chol.inverse(),
            chol_l: chol.l(),
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + logdet),
            cov,
        })
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.prec
    }
}

impl ParametricModel for MvGaussianMean {
    fn name(&self) -> String {
        format!("mv_gaussian_mean(d={})", self.cov.nrows())
    }
    fn dim(&self) -> usize {
        self.cov.nrows()
    }
    fn obs_dim(&self) -> usize {
        self.cov.nrows()
    }
    fn domain(&self) -> Domain {
        Domain::Unconstrained
    }
    fn loglik(&self, x: &[f64], t: &DVector<f64>) -> f64 {
        let r = DVector::from_column_slice(x) - t;
        self.log_norm - 0.5 * (r.transpose() * &self.prec * &r)[0]
    }
    fn grad(&self, x: &[f64], t: &DVector<f64>) -> DVector<f64> {
        &self.prec * (DVector::from_column_slice(x) - t)
    }
    fn hess(&self, _x: &[f64], _t: &DVector<f64>) -> DMatrix<f64> {
        -&self.prec
    }
    fn sample_obs(&self, t: &DVector<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let z = DVector::from_fn(t.len(), |_, _| StandardNormal.sample(&mut *rng));
        Some((t + &self.chol_l * z).iter().copied().collect())
    }
    fn closed_form_mle(&self, data: &Dataset) -> Option<DVector<f64>> {
        Some(DVector::from_fn(self.dim(), |j, _| mean_column(data, j)))
    }
    fn gaussian_noise_cov(&self) -> Option<DMatrix<f64>> {
        Some(self.cov.clone())
    }
    fn accumulate(&self, x: &[f64], t: &DVector<f64>, w: f64, acc: &mut Derivs) {
        let r = DVector::from_column_slice(x) - t;
        let pr = &self.prec * &r;
        acc.value += w * (self.log_norm - 0.5 * r.dot(&pr));
        acc.grad.axpy(w, &pr, 1.0);
        acc.hess -= &self.prec * w;
    }
}

/// Poisson log-linear regression. Observation layout: `[y, z_1, …, z_p]`, mean exp(zᵀβ).
#[derive(Debug, Clone)]
pub struct PoissonRegression {
    pub p: usize,
}

impl PoissonRegression {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1, "at least one covariate");
        Self { p }
    }

    fn eta(&self, x: &[f64], b: &DVector<f64>) -> f64 {
        x[1..].iter().zip(b.iter()).map(|(z, b)| z * b).sum()
    }
}

impl ParametricModel for PoissonRegression {
    fn name(&self) -> String {
        format!("poisson_regression(p={})", self.p)
    }
    fn dim(&self) -> usize {
        self.p
    }
    fn obs_dim(&self) -> usize {
        self.p + 1
    }
    fn domain(&self) -> Domain {
        Domain::Unconstrained
    }
    fn loglik(&self, x: &[f64], b: &DVector<f64>) -> f64 {
        let eta = self.eta(x, b);
        x[0] * eta - eta.exp() - ln_gamma(x[0] + 1.0)
    }
    fn grad(&self, x: &[f64], b: &DVector<f64>) -> DVector<f64> {
        let r = x[0] - self.eta(x, b).exp();
        DVector::from_iterator(self.p, x[1..].iter().map(|z| r * z))
    }
    fn hess(&self, x: &[f64], b: &DVector<f64>) -> DMatrix<f64> {
        let mu = self.eta(x, b).exp();
        DMatrix::from_fn(self.p, self.p, |i, j| -mu * x[1 + i] * x[1 + j])
    }
    fn initial_guess(&self, data: &Dataset) -> DVector<f64> {
        let mut b = DVector::zeros(self.p);
        // Start the intercept (a constant covariate column) at log ȳ.
        if data.rows().all(|r| r[1] == 1.0) {
            let ybar = mean_column(data, 0);
            if ybar > 0.0 {
                b[0] = ybar.ln();
            }
        }
        b
    }
    fn accumulate(&self, x: &[f64], b: &DVector<f64>, w: f64, acc: &mut Derivs) {
        let eta = self.eta(x, b);
        let mu = eta.exp();
        acc.value += w * (x[0] * eta - mu - ln_gamma(x[0] + 1.0));
        let r = w * (x[0] - mu);
        let z = &x[1..];
        for i in 0..self.p {
            acc.grad[i] += r * z[i];
            let wi = w * mu * z[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                let v = wi * zj;
                acc.hess[(i, j)] -= v;
                if i != j {
                    acc.hess[(j, i)] -= v;
                }
            }
        }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Bernoulli in its canonical parameter θ = logit p.
#[derive(Debug, Clone, Default)]
pub struct Bernoulli;

impl Bernoulli {
    pub fn new() -> Self {
        Self
    }
}

impl ParametricModel for Bernoulli {
    fn name(&self) -> String {
        "bernoulli".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        Domain::Unconstrained
    }
    fn loglik(&self, x: &[f64], t: &DVector<f64>) -> f64 {
        x[0] * t[0] - softplus(t[0])
    }
    fn grad(&self, x: &[f64], t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0] - sigmoid(t[0]))
    }
    fn hess(&self, _x: &[f64], t: &DVector<f64>) -> DMatrix<f64> {
        let s = sigmoid(t[0]);
        DMatrix::from_element(1, 1, -s * (1.0 - s))
    }
    fn third(&self, _x: &[f64], t: &DVector<f64>) -> Option<f64> {
        let s = sigmoid(t[0]);
        Some(-s * (1.0 - s) * (1.0 - 2.0 * s))
    }
    fn sample_obs(&self, t: &DVector<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let b = BernoulliDist::new(sigmoid(t[0])).ok()?;
        Some(vec![if b.sample(rng) { 1.0 } else { 0.0 }])
    }
    fn closed_form_mle(&self, data: &Dataset) -> Option<DVector<f64>> {
        let p = mean_column(data, 0);
        (p > 0.0 && p < 1.0).then(|| DVector::from_element(1, (p / (1.0 - p)).ln()))
    }
}

/// Multinomial counts over `k` categories, θ in the simplex interior.
#[derive(Debug, Clone)]
pub struct Multinomial {
    pub k: usize,
}

impl Multinomial {
    pub fn new(k: usize) -> Self {
        assert!(k >= 2, "at least two categories");
        Self { k }
    }

    /// Proportions floored at `MULTINOMIAL_EPS` and renormalized.
    pub fn clip_to_interior(p: &DVector<f64>) -> DVector<f64> {
        let q = p.map(|v| v.max(MULTINOMIAL_EPS));
        let s = q.sum();
        q / s
    }
}

impl ParametricModel for Multinomial {
    fn name(&self) -> String {
        format!("multinomial(k={})", self.k)
    }
    fn dim(&self) -> usize {
        self.k
    }
    fn obs_dim(&self) -> usize {
        self.k
    }
    fn domain(&self) -> Domain {
        Domain::Simplex
    }
    fn loglik(&self, x: &[f64], t: &DVector<f64>) -> f64 {
        let total: f64 = x.iter().sum();
        let mut v = ln_gamma(total + 1.0);
        for (xl, tl) in x.iter().zip(t.iter()) {
            v -= ln_gamma(xl + 1.0);
            if *xl != 0.0 {
                v += xl * tl.ln();
            }
        }
        v
    }
    fn grad(&self, x: &[f64], t: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.k, |l, _| x[l] / t[l])
    }
    fn hess(&self, x: &[f64], t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(self.k, |l, _| -x[l] / (t[l] * t[l])))
    }
    /// One categorical trial, returned as a one-hot count vector.
    fn sample_obs(&self, t: &DVector<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.k];
        out[categorical(t.as_slice(), rng)] = 1.0;
        Some(out)
    }
    fn closed_form_mle(&self, data: &Dataset) -> Option<DVector<f64>> {
        let counts = DVector::from_fn(self.k, |l, _| data.rows().map(|r| r[l]).sum::<f64>());
        let total = counts.sum();
        (total > 0.0).then(|| Self::clip_to_interior(&(counts / total)))
    }
}

/// Index drawn with probabilities proportional to `p`, from one uniform.
pub(crate) fn categorical(p: &[f64], rng: &mut dyn RngCore) -> usize {
    let total: f64 = p.iter().sum();
    let u = uniform_open0(rng) * total;
    let mut acc = 0.0;
    for (l, &pl) in p.iter().enumerate() {
        acc += pl;
        if u <= acc {
            return l;
        }
    }
    p.len() - 1
}

/// Gamma(α, rate λ) observations with known shape α; parameter λ > 0.
#[derive(Debug, Clone)]
pub struct GammaShapeKnown {
    pub alpha: f64,
}

impl GammaShapeKnown {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0, "shape must be positive");
        Self { alpha }
    }
}

impl ParametricModel for GammaShapeKnown {
    fn name(&self) -> String {
        format!("gamma_shape_known(alpha={})", self.alpha)
    }
    fn dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn loglik(&self, x: &[f64], t: &DVector<f64>) -> f64 {
        let a = self.alpha;
        a * t[0].ln() - ln_gamma(a) + (a - 1.0) * x[0].ln() - t[0] * x[0]
    }
    fn grad(&self, x: &[f64], t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.alpha / t[0] - x[0])
    }
    fn hess(&self, _x: &[f64], t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -self.alpha / (t[0] * t[0]))
    }
    fn third(&self, _x: &[f64], t: &DVector<f64>) -> Option<f64> {
        Some(2.0 * self.alpha / t[0].powi(3))
    }
    fn sample_obs(&self, t: &DVector<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let g = Gamma::new(self.alpha, 1.0 / t[0]).ok()?;
        Some(vec![g.sample(rng)])
    }
    fn closed_form_mle(&self, data: &Dataset) -> Option<DVector<f64>> {
        let m = mean_column(data, 0);
        (m > 0.0).then(|| DVector::from_element(1, self.alpha / m))
    }
}

/// Poisson(θ) counts with rate θ > 0.
#[derive(Debug, Clone, Default)]
pub struct PoissonRate;

impl PoissonRate {
    pub fn new() -> Self {
        Self
    }
}

impl ParametricModel for PoissonRate {
    fn name(&self) -> String {
        "poisson_rate".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }
    fn domain(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn loglik(&self, x: &[f64], t: &DVector<f64>) -> f64 {
        let xl = if x[0] != 0.0 { x[0] * t[0].ln() } else { 0.0 };
        xl - t[0] - ln_gamma(x[0] + 1.0)
    }
    fn grad(&self, x: &[f64], t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0] / t[0] - 1.0)
    }
    fn hess(&self, x: &[f64], t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -x[0] / (t[0] * t[0]))
    }
    fn third(&self, x: &[f64], t: &DVector<f64>) -> Option<f64> {
        Some(2.0 * x[0] / t[0].powi(3))
    }
    fn sample_obs(&self, t: &DVector<f64>, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let p = Poisson::new(t[0]).ok()?;
        Some(vec![p.sample(rng)])
    }
    /// Sample mean, floored at `MULTINOMIAL_EPS` to stay interior.
    fn closed_form_mle(&self, data: &Dataset) -> Option<DVector<f64>> {
        Some(DVector::from_element(
            1,
            mean_column(data, 0).max(MULTINOMIAL_EPS),
        ))
    }
    fn accumulate(&self, x: &[f64], t: &DVector<f64>, w: f64, acc: &mut Derivs) {
        let th = t[0];
        acc.value += w * self.loglik(x, t);
        acc.grad[0] += w * (x[0] / th - 1.0);
        acc.hess[(0, 0)] -= w * x[0] / (th * th);
    }
}
