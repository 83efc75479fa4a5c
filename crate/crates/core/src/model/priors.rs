use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

use super::{Domain, Prior};
use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// N(μ, Σ). Factorized exactly when Σ is diagonal.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    prec: DMatrix<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
    diagonal: bool,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: cov.nrows(),
            });
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Singular("prior covariance is not positive definite".into()))?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || cov[(i, j)] == 0.0));
        Ok(Self {
            prec: chol.inverse(),
            chol_l: chol.l(),
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + logdet),
            diagonal,
            mean,
            cov,
        })
    }

    /// N(μ, v·I).
    pub fn isotropic(mean: DVector<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * var)
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::isotropic(DVector::from_element(1, mean), var)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.prec
    }
}

impl Prior for GaussianPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn support(&self) -> Domain {
        Domain::Unconstrained
    }
    fn factorized(&self) -> bool {
        self.diagonal
    }
    fn logpdf(&self, t: &DVector<f64>) -> f64 {
        let r = t - &self.mean;
        self.log_norm - 0.5 * (r.transpose() * &self.prec * &r)[0]
    }
    fn grad(&self, t: &DVector<f64>) -> DVector<f64> {
        -(&self.prec * (t - &self.mean))
    }
    fn hess(&self, _t: &DVector<f64>) -> DMatrix<f64> {
        -&self.prec
    }
    fn coord_logpdf(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        self.diagonal.then(|| {
            DVector::from_fn(t.len(), |k, _| {
                let v = self.cov[(k, k)];
                let r = t[k] - self.mean[k];
                -0.5 * (2.0 * PI * v).ln() - r * r / (2.0 * v)
            })
        })
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let z = DVector::from_fn(self.mean.len(), |_, _| StandardNormal.sample(&mut *rng));
        Some(&self.mean + &self.chol_l * z)
    }
}

/// Independent Gamma(shape a_k, rate b_k) coordinates.
#[derive(Debug, Clone)]
pub struct GammaPrior {
    pub shape: DVector<f64>,
    pub rate: DVector<f64>,
}

impl GammaPrior {
    pub fn new(shape: DVector<f64>, rate: DVector<f64>) -> Result<Self> {
        if shape.len() != rate.len() {
            return Err(Error::Dimension {
                expected: shape.len(),
                got: rate.len(),
            });
        }
        if shape.iter().chain(rate.iter()).any(|&v| !(v > 0.0)) {
            return Err(Error::Config(
                "gamma prior parameters must be positive".into(),
            ));
        }
        Ok(Self { shape, rate })
    }

    pub fn scalar(shape: f64, rate: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, shape),
            DVector::from_element(1, rate),
        )
    }
}

impl Prior for GammaPrior {
    fn dim(&self) -> usize {
        self.shape.len()
    }
    fn support(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn factorized(&self) -> bool {
        true
    }
    fn logpdf(&self, t: &DVector<f64>) -> f64 {
        self.coord_logpdf(t).unwrap().sum()
    }
    fn grad(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(t.len(), |k, _| (self.shape[k] - 1.0) / t[k] - self.rate[k])
    }
    fn hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(t.len(), |k, _| {
            -(self.shape[k] - 1.0) / (t[k] * t[k])
        }))
    }
    fn coord_logpdf(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_fn(t.len(), |k, _| {
            let (a, b) = (self.shape[k], self.rate[k]);
            a * b.ln() - ln_gamma(a) + (a - 1.0) * t[k].ln() - b * t[k]
        }))
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        for k in 0..self.dim() {
            out[k] = Gamma::new(self.shape[k], 1.0 / self.rate[k])
                .ok()?
                .sample(&mut *rng);
        }
        Some(out)
    }
}

/// Draws Dirichlet(α) by normalizing independent Gamma(α_l, 1) variates.
pub(crate) fn sample_dirichlet(alpha: &[f64], rng: &mut dyn RngCore) -> Option<DVector<f64>> {
    let mut g = DVector::zeros(alpha.len());
    for (l, &a) in alpha.iter().enumerate() {
        g[l] = Gamma::new(a, 1.0).ok()?.sample(&mut *rng);
    }
    let s = g.sum();
    (s > 0.0).then(|| g / s)
}

/// Dirichlet(α) on the simplex, log density Σ(α_l − 1) log θ_l up to a constant.
#[derive(Debug, Clone)]
pub struct DirichletPrior {
    pub alpha: DVector<f64>,
}

impl DirichletPrior {
    pub fn new(alpha: DVector<f64>) -> Result<Self> {
        if alpha.len() < 2 || alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Config(
                "dirichlet concentrations must be positive, k ≥ 2".into(),
            ));
        }
        Ok(Self { alpha })
    }
}

impl Prior for DirichletPrior {
    fn dim(&self) -> usize {
        self.alpha.len()
    }
    fn support(&self) -> Domain {
        Domain::Simplex
    }
    fn factorized(&self) -> bool {
        true
    }
    fn logpdf(&self, t: &DVector<f64>) -> f64 {
        self.coord_logpdf(t).unwrap().sum()
    }
    fn grad(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(t.len(), |l, _| (self.alpha[l] - 1.0) / t[l])
    }
    fn hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(t.len(), |l, _| {
            -(self.alpha[l] - 1.0) / (t[l] * t[l])
        }))
    }
    fn coord_logpdf(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_fn(t.len(), |l, _| {
            (self.alpha[l] - 1.0) * t[l].ln()
        }))
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        sample_dirichlet(self.alpha.as_slice(), rng)
    }
}

/// Independent N(0, τ²) coordinates truncated to (0, ∞). The truncation constant is omitted.
#[derive(Debug, Clone)]
pub struct TruncatedNormalPrior {
    pub tau: f64,
    pub dim: usize,
}

impl TruncatedNormalPrior {
    pub fn new(tau: f64, dim: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Config("tau must be positive".into()));
        }
        Ok(Self { tau, dim })
    }
}

impl Prior for TruncatedNormalPrior {
    fn dim(&self) -> usize {
        self.dim
    }
    fn support(&self) -> Domain {
        Domain::PositiveOrthant
    }
    fn factorized(&self) -> bool {
        true
    }
    fn logpdf(&self, t: &DVector<f64>) -> f64 {
        -t.norm_squared() / (2.0 * self.tau * self.tau)
    }
    fn grad(&self, t: &DVector<f64>) -> DVector<f64> {
        -t / (self.tau * self.tau)
    }
    fn hess(&self, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (-1.0 / (self.tau * self.tau))
    }
    fn coord_logpdf(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        Some(t.map(|v| -v * v / (2.0 * self.tau * self.tau)))
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        Some(DVector::from_fn(self.dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            (self.tau * z).abs()
        }))
    }
}

/// Constant log density on a domain.
#[derive(Debug, Clone)]
pub struct FlatPrior {
    pub dim: usize,
    pub domain: Domain,
}

impl FlatPrior {
    pub fn new(dim: usize, domain: Domain) -> Self {
        Self { dim, domain }
    }
}

impl Prior for FlatPrior {
    fn dim(&self) -> usize {
        self.dim
    }
    fn support(&self) -> Domain {
        self.domain
    }
    fn factorized(&self) -> bool {
        true
    }
    fn logpdf(&self, _t: &DVector<f64>) -> f64 {
        0.0
    }
    fn grad(&self, _t: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn hess(&self, _t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn coord_logpdf(&self, _t: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim))
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One-dimensional Jeffreys prior π ∝ I(θ)^{1/2}, from caller-supplied I, I′ and I″.
#[derive(Clone)]
pub struct JeffreysPrior {
    info: ScalarFn,
    d_info: ScalarFn,
    d2_info: ScalarFn,
    domain: Domain,
}

impl std::fmt::Debug for JeffreysPrior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JeffreysPrior")
            .field("domain", &self.domain)
            .finish()
    }
}

impl JeffreysPrior {
    pub fn new(
        info: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d_info: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2_info: impl Fn(f64) -> f64 + Send + Sync + 'static,
        domain: Domain,
    ) -> Self {
        Self {
            info: Arc::new(info),
            d_info: Arc::new(d_info),
            d2_info: Arc::new(d2_info),
            domain,
        }
    }

    pub fn info(&self, t: f64) -> f64 {
        (self.info)(t)
    }

    pub fn d_info(&self, t: f64) -> f64 {
        (self.d_info)(t)
    }
}

impl Prior for JeffreysPrior {
    fn dim(&self) -> usize {
        1
    }
    fn support(&self) -> Domain {
        self.domain
    }
    fn factorized(&self) -> bool {
        true
    }
    fn logpdf(&self, t: &DVector<f64>) -> f64 {
        0.5 * (self.info)(t[0]).ln()
    }
    fn grad(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, (self.d_info)(t[0]) / (2.0 * (self.info)(t[0])))
    }
    fn hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let (i, d1, d2) = ((self.info)(t[0]), (self.d_info)(t[0]), (self.d2_info)(t[0]));
        DMatrix::from_element(1, 1, 0.5 * (d2 / i - (d1 / i).powi(2)))
    }
    fn coord_logpdf(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, self.logpdf(t)))
    }
}

/// Beta(a, b) on p pushed to θ = logit p: log π = aθ − (a+b)·log(1+e^θ).
/// Conjugate to `Bernoulli` with effective sample size n₀ = a + b.
#[derive(Debug, Clone)]
pub struct LogisticBetaPrior {
    pub a: f64,
    pub b: f64,
}

impl LogisticBetaPrior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Config("beta parameters must be positive".into()));
        }
        Ok(Self { a, b })
    }

    pub fn n0(&self) -> f64 {
        self.a + self.b
    }
}

impl Prior for LogisticBetaPrior {
    fn dim(&self) -> usize {
        1
    }
    fn support(&self) -> Domain {
        Domain::Unconstrained
    }
    fn factorized(&self) -> bool {
        true
    }
    fn logpdf(&self, t: &DVector<f64>) -> f64 {
        let x = t[0];
        self.a * x - self.n0() * (x.max(0.0) + (-x.abs()).exp().ln_1p())
    }
    fn grad(&self, t: &DVector<f64>) -> DVector<f64> {
        let s = 1.0 / (1.0 + (-t[0]).exp());
        DVector::from_element(1, self.a - self.n0() * s)
    }
    fn hess(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let s = 1.0 / (1.0 + (-t[0]).exp());
        DMatrix::from_element(1, 1, -self.n0() * s * (1.0 - s))
    }
    fn coord_logpdf(&self, t: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_element(1, self.logpdf(t)))
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let p: f64 = Beta::new(self.a, self.b).ok()?.sample(rng);
        (p > 0.0 && p < 1.0).then(|| DVector::from_element(1, (p / (1.0 - p)).ln()))
    }
}
