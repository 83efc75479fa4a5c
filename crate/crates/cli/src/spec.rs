//! Parsing of the `name:args` model, prior and weight specs used on the command line.

use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use pb_core::info::{empirical_info, prior_weight_rule, w0_bar, InfoEstimates};
use pb_core::model::{
    read_csv_dataset, Bernoulli, CsvOptions, DirichletPrior, FlatPrior, GammaPrior,
    GammaShapeKnown, GaussianLocation, GaussianPrior, LogisticBetaPrior, Multinomial,
    MvGaussianMean, PoissonRate, PoissonRegression,
};
use pb_core::solve::mle;
use pb_core::{Dataset, ParametricModel, PenaltyWeight, Prior, SolveConfig};

use crate::exit::usage;

pub const MODEL_HELP: &str = "gaussian[:VAR], mv-gaussian:C11,C12,…, poisson, \
poisson-regression, bernoulli, multinomial, gamma-shape:ALPHA";

pub const PRIOR_HELP: &str =
    "flat, normal:MEAN,VAR, gamma:SHAPE,RATE, dirichlet:ALPHA, logistic-beta:A,B";

fn split(spec: &str) -> (&str, Option<&str>) {
    match spec.split_once(':') {
        Some((name, args)) => (name.trim(), Some(args)),
        None => (spec.trim(), None),
    }
}

/// Comma-separated numbers.
pub fn numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("`{t}` is not a number")))
        })
        .collect()
}

fn exactly<const K: usize>(name: &str, args: Option<&str>) -> Result<[f64; K]> {
    let v = numbers(args.ok_or_else(|| usage(format!("{name} needs {K} argument(s)")))?)?;
    v.try_into()
        .map_err(|_| usage(format!("{name} needs exactly {K} argument(s)")))
}

/// Likelihood named on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Gaussian(f64),
    MvGaussian(Vec<f64>),
    Poisson,
    PoissonRegression,
    Bernoulli,
    Multinomial,
    GammaShape(f64),
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = split(s);
        Ok(match name {
            "gaussian" => match args {
                Some(_) => Self::Gaussian(exactly::<1>(name, args)?[0]),
                None => Self::Gaussian(1.0),
            },
            "mv-gaussian" => Self::MvGaussian(numbers(
                args.ok_or_else(|| usage("mv-gaussian needs its covariance entries"))?,
            )?),
            "poisson" => Self::Poisson,
            "poisson-regression" => Self::PoissonRegression,
            "bernoulli" => Self::Bernoulli,
            "multinomial" => Self::Multinomial,
            "gamma-shape" => Self::GammaShape(exactly::<1>(name, args)?[0]),
            _ => {
                return Err(usage(format!(
                    "unknown model `{name}`; expected {MODEL_HELP}"
                )))
            }
        })
    }

    /// Builds the model for data with `obs_dim` columns per observation.
    pub fn build(&self, obs_dim: usize) -> Result<Box<dyn ParametricModel>> {
        let model: Box<dyn ParametricModel> = match self {
            Self::Gaussian(v) => {
                if !(*v > 0.0) {
                    return Err(usage("gaussian variance must be positive"));
                }
                Box::new(GaussianLocation::new(*v))
            }
            Self::MvGaussian(c) => {
                let d = (c.len() as f64).sqrt().round() as usize;
                if d * d != c.len() || d == 0 {
                    return Err(usage("mv-gaussian covariance must have d² entries"));
                }
                Box::new(MvGaussianMean::new(DMatrix::from_row_slice(d, d, c))?)
            }
            Self::Poisson => Box::new(PoissonRate::new()),
            Self::PoissonRegression => {
                if obs_dim < 2 {
                    return Err(usage(
                        "poisson-regression needs a response and at least one covariate",
                    ));
                }
                Box::new(PoissonRegression::new(obs_dim - 1))
            }
            Self::Bernoulli => Box::new(Bernoulli::new()),
            Self::Multinomial => Box::new(Multinomial::new(obs_dim)),
            Self::GammaShape(a) => {
                if !(*a > 0.0) {
                    return Err(usage("gamma-shape needs a positive shape"));
                }
                Box::new(GammaShapeKnown::new(*a))
            }
        };
        if model.obs_dim() != obs_dim {
            return Err(usage(format!(
                "{} expects {} column(s) per observation, data has {obs_dim}",
                model.name(),
                model.obs_dim()
            )));
        }
        Ok(model)
    }
}

/// Prior named on the command line; scalar arguments are broadcast to every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    Flat,
    Normal { mean: f64, var: f64 },
    Gamma { shape: f64, rate: f64 },
    Dirichlet(f64),
    LogisticBeta { a: f64, b: f64 },
}

impl PriorSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, args) = split(s);
        Ok(match name {
            "flat" => Self::Flat,
            "normal" => {
                let [mean, var] = exactly::<2>(name, args)?;
                Self::Normal { mean, var }
            }
            "gamma" => {
                let [shape, rate] = exactly::<2>(name, args)?;
                Self::Gamma { shape, rate }
            }
            "dirichlet" => Self::Dirichlet(exactly::<1>(name, args)?[0]),
            "logistic-beta" => {
                let [a, b] = exactly::<2>(name, args)?;
                Self::LogisticBeta { a, b }
            }
            _ => {
                return Err(usage(format!(
                    "unknown prior `{name}`; expected {PRIOR_HELP}"
                )))
            }
        })
    }

    /// The Gaussian prior, when this spec is one.
    pub fn gaussian(&self, dim: usize) -> Result<Option<GaussianPrior>> {
        match *self {
            Self::Normal { mean, var } => Ok(Some(GaussianPrior::isotropic(
                DVector::from_element(dim, mean),
                var,
            )?)),
            _ => Ok(None),
        }
    }

    pub fn build(&self, model: &dyn ParametricModel) -> Result<Box<dyn Prior>> {
        let d = model.dim();
        let prior: Box<dyn Prior> = match *self {
            Self::Flat => Box::new(FlatPrior::new(d, model.domain())),
            Self::Normal { .. } => Box::new(self.gaussian(d)?.expect("normal spec")),
            Self::Gamma { shape, rate } => Box::new(GammaPrior::new(
                DVector::from_element(d, shape),
                DVector::from_element(d, rate),
            )?),
            Self::Dirichlet(a) => Box::new(DirichletPrior::new(DVector::from_element(d, a))?),
            Self::LogisticBeta { a, b } => {
                if d != 1 {
                    return Err(usage("logistic-beta is a one-dimensional prior"));
                }
                Box::new(LogisticBetaPrior::new(a, b)?)
            }
        };
        if prior.support() != model.domain() && !matches!(self, Self::Flat) {
            return Err(usage(format!(
                "prior support {:?} does not match the {:?} domain of {}",
                prior.support(),
                model.domain(),
                model.name()
            )));
        }
        Ok(prior)
    }
}

/// Prior weight: explicit numbers or one of the information rules.
#[derive(Debug, Clone, PartialEq)]
pub enum W0Spec {
    Fixed(PenaltyWeight),
    /// Per-coordinate w0*, or w̄0* when the prior does not factorize.
    Star,
    Bar,
}

impl W0Spec {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "star" => Self::Star,
            "bar" => Self::Bar,
            other => {
                let v = numbers(other)?;
                if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return Err(usage("w0 entries must be finite and non-negative"));
                }
                if v.len() == 1 {
                    Self::Fixed(PenaltyWeight::Scalar(v[0]))
                } else {
                    Self::Fixed(PenaltyWeight::Vector(v))
                }
            }
        })
    }

    pub fn resolve(
        &self,
        model: &dyn ParametricModel,
        data: &Dataset,
        prior: &dyn Prior,
        cfg: &SolveConfig,
    ) -> Result<PenaltyWeight> {
        let info = || -> Result<InfoEstimates> {
            let theta = mle(model, data, cfg)?;
            Ok(empirical_info(model, data, &theta)?)
        };
        Ok(match self {
            Self::Fixed(w) => w.clone(),
            Self::Star => prior_weight_rule(&info()?, prior)?,
            Self::Bar => PenaltyWeight::Scalar(w0_bar(&info()?)?),
        })
    }
}

/// Column conventions for `--data`.
#[derive(Debug, Clone, Default)]
pub struct DataArgs {
    pub response: Option<String>,
    pub intercept: bool,
}

pub fn read_data(path: &Path, args: &DataArgs) -> Result<Dataset> {
    if !path.is_file() {
        return Err(usage(format!("data file {} not found", path.display())));
    }
    let opts = CsvOptions {
        response: args.response.clone(),
        intercept: args.intercept,
    };
    read_csv_dataset(path, &opts).with_context(|| format!("reading {}", path.display()))
}
