//! Models, priors, datasets and the built-in catalog.
//!
//! Log-likelihoods include their density constants. Priors are stored up to an
//! additive constant.

mod builtin;
mod conditional;
mod dataset;
mod priors;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use builtin::categorical;
pub use builtin::{
    Bernoulli, GammaShapeKnown, GaussianLocation, Multinomial, MvGaussianMean, PoissonRate,
    PoissonRegression, MULTINOMIAL_EPS,
};
pub use conditional::thetas_dataset as conditional_thetas_dataset;
pub use conditional::{
    ConditionalPrior, DirichletConditional, FixedLambda, GammaPoissonConditional,
    GammaRateConditional, GaussianGaussianConditional, LambdaConditional, LambdaModel,
    NormalMeanConditional, ThetaPrior,
};
pub use dataset::{read_csv_dataset, CsvOptions, Dataset};
pub(crate) use priors::sample_dirichlet;
pub use priors::{
    DirichletPrior, FlatPrior, GammaPrior, GaussianPrior, JeffreysPrior, LogisticBetaPrior,
    TruncatedNormalPrior,
};

/// Parameter domain in natural coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Unconstrained,
    PositiveOrthant,
    /// Interior of the probability simplex.
    Simplex,
}

impl Domain {
    pub const SIMPLEX_TOL: f64 = 1e-8;

    pub fn contains_interior(&self, theta: &DVector<f64>) -> bool {
        if theta.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::Unconstrained => true,
            Domain::PositiveOrthant => theta.iter().all(|&v| v > 0.0),
            Domain::Simplex => {
                theta.iter().all(|&v| v > 0.0) && (theta.sum() - 1.0).abs() < Self::SIMPLEX_TOL
            }
        }
    }

    /// Dimension of the unconstrained coordinates used by the optimizer.
    pub fn free_dim(&self, d: usize) -> usize {
        match self {
            Domain::Simplex => d - 1,
            _ => d,
        }
    }
}

/// A finite parameter vector θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(DVector<f64>);

impl ParamVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    /// Validates finiteness and the model's declared dimension.
    pub fn for_model(model: &dyn ParametricModel, values: DVector<f64>) -> Result<Self> {
        if values.len() != model.dim() {
            return Err(Error::Dimension {
                expected: model.dim(),
                got: values.len(),
            });
        }
        Self::new(values)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl std::ops::Deref for ParamVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Weighted accumulator for value, gradient and Hessian.
#[derive(Debug, Clone)]
pub struct Derivs {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Derivs {
    pub fn zeros(d: usize) -> Self {
        Self {
            value: 0.0,
            grad: DVector::zeros(d),
            hess: DMatrix::zeros(d, d),
        }
    }
}

/// A parametric likelihood f(x|θ) with analytic derivatives of ℓ = log f.
pub trait ParametricModel: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn domain(&self) -> Domain;

    fn loglik(&self, x: &[f64], theta: &DVector<f64>) -> f64;
    fn grad(&self, x: &[f64], theta: &DVector<f64>) -> DVector<f64>;
    fn hess(&self, x: &[f64], theta: &DVector<f64>) -> DMatrix<f64>;

    /// D³ℓ, only for d = 1.
    fn third(&self, _x: &[f64], _theta: &DVector<f64>) -> Option<f64> {
        None
    }

    /// Draws one observation from f(·|θ).
    fn sample_obs(&self, _theta: &DVector<f64>, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }

    fn closed_form_mle(&self, _data: &Dataset) -> Option<DVector<f64>> {
        None
    }

    /// Known noise covariance, for Gaussian mean models with conjugate posteriors.
    fn gaussian_noise_cov(&self) -> Option<DMatrix<f64>> {
        None
    }

    /// Starting point for numerical maximum likelihood.
    fn initial_guess(&self, _data: &Dataset) -> DVector<f64> {
        let d = self.dim();
        match self.domain() {
            Domain::Unconstrained => DVector::zeros(d),
            Domain::PositiveOrthant => DVector::from_element(d, 1.0),
            Domain::Simplex => DVector::from_element(d, 1.0 / d as f64),
        }
    }

    /// Adds w·ℓ, w·∇ℓ and w·D²ℓ at one observation.
    fn accumulate(&self, x: &[f64], theta: &DVector<f64>, w: f64, acc: &mut Derivs) {
        acc.value += w * self.loglik(x, theta);
        acc.grad.axpy(w, &self.grad(x, theta), 1.0);
        acc.hess += self.hess(x, theta) * w;
    }
}

/// A prior π(θ), stored up to an additive constant.
pub trait Prior: Send + Sync {
    fn dim(&self) -> usize;
    fn support(&self) -> Domain;
    /// Whether log π is a sum of per-coordinate terms.
    fn factorized(&self) -> bool;
    fn logpdf(&self, theta: &DVector<f64>) -> f64;
    fn grad(&self, theta: &DVector<f64>) -> DVector<f64>;
    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64>;
    /// The per-coordinate terms log π_k(θ_k) of a factorized prior.
    fn coord_logpdf(&self, _theta: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
    fn sample(&self, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }
}

/// Neumaier-compensated sum, accumulated in the given order.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Σᵢ ℓ(xᵢ, θ), summed in row order with compensated summation.
pub fn loglik_sum(
    model: &dyn ParametricModel,
    data: &Dataset,
    theta: &DVector<f64>,
) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::Empty("dataset".into()));
    }
    let mut acc = KahanSum::default();
    for (i, x) in data.rows().enumerate() {
        let v = model.loglik(x, theta);
        if !v.is_finite() {
            return Err(Error::Evaluation { row: i });
        }
        acc.add(v);
    }
    Ok(acc.value())
}

/// Maximum relative errors |analytic − finite difference| / (1 + |analytic|).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub grad_err: f64,
    pub hess_err: f64,
}

impl FdReport {
    pub fn max(&self) -> f64 {
        self.grad_err.max(self.hess_err)
    }
}

fn fd_core(
    theta: &DVector<f64>,
    h: f64,
    f: impl Fn(&DVector<f64>) -> f64,
    grad: impl Fn(&DVector<f64>) -> DVector<f64>,
    hess: &DMatrix<f64>,
) -> Result<FdReport> {
    let d = theta.len();
    let g0 = grad(theta);
    let mut grad_err: f64 = 0.0;
    let mut hess_err: f64 = 0.0;
    for k in 0..d {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[k] += h;
        tm[k] -= h;
        let (fp, fm) = (f(&tp), f(&tm));
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::DomainBoundary(format!(
                "non-finite value at perturbed coordinate {k}"
            )));
        }
        let fd = (fp - fm) / (2.0 * h);
        grad_err = grad_err.max((g0[k] - fd).abs() / (1.0 + g0[k].abs()));
        // Hessian column from central differences of the analytic gradient.
        let col = (grad(&tp) - grad(&tm)) / (2.0 * h);
        for j in 0..d {
            let a = hess[(j, k)];
            if !col[j].is_finite() {
                return Err(Error::DomainBoundary(format!(
                    "non-finite gradient at perturbed coordinate {k}"
                )));
            }
            hess_err = hess_err.max((a - col[j]).abs() / (1.0 + a.abs()));
        }
    }
    Ok(FdReport { grad_err, hess_err })
}

/// Central finite-difference check of `grad` against `loglik` and `hess` against `grad`.
pub fn finite_diff_check(
    model: &dyn ParametricModel,
    theta: &DVector<f64>,
    x: &[f64],
    h: f64,
) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(Error::Config(
            "finite-difference step must be positive".into(),
        ));
    }
    if theta.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: theta.len(),
        });
    }
    let interior = match model.domain() {
        // Ambient-coordinate checks only need positivity.
        Domain::Simplex => theta.iter().all(|&v| v > 0.0 && v.is_finite()),
        dom => dom.contains_interior(theta),
    };
    if !interior {
        return Err(Error::DomainBoundary(
            "θ is not interior to the model domain".into(),
        ));
    }
    let hess = model.hess(x, theta);
    fd_core(
        theta,
        h,
        |t| model.loglik(x, t),
        |t| model.grad(x, t),
        &hess,
    )
}

/// Finite-difference check of a prior's gradient and Hessian.
pub fn prior_finite_diff_check(
    prior: &dyn Prior,
    theta: &DVector<f64>,
    h: f64,
) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(Error::Config(
            "finite-difference step must be positive".into(),
        ));
    }
    let hess = prior.hess(theta);
    fd_core(theta, h, |t| prior.logpdf(t), |t| prior.grad(t), &hess)
}
