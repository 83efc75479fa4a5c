//! Random weights and the weighted, prior-penalized Newton maximizer.
//!
//! Constrained domains are optimized in free coordinates: log for the positive
//! orthant, additive log-ratio (last category as reference) for the simplex.
//! Convergence is measured by the sup-norm of the gradient in those coordinates.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Derivs, Domain, KahanSum, ParamVector, ParametricModel, Prior};
use crate::rng::{exponential, RngStream};

/// Strictly positive random weights together with the rate of their exponential law.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub rate: f64,
}

impl WeightVector {
    /// Unit weights (plain maximum likelihood).
    pub fn ones(n: usize) -> Self {
        Self {
            w: vec![1.0; n],
            rate: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// n independent Exponential(rate) weights from a fresh stream.
pub fn draw_weights(n: usize, rate: f64, stream: RngStream) -> WeightVector {
    draw_weights_from(&mut stream.rng(), n, rate)
}

/// n independent Exponential(rate) weights continuing an existing stream.
pub fn draw_weights_from<R: RngCore + ?Sized>(rng: &mut R, n: usize, rate: f64) -> WeightVector {
    assert!(
        rate > 0.0 && rate.is_finite(),
        "weight rate must be positive"
    );
    WeightVector {
        w: (0..n).map(|_| exponential(rng, rate)).collect(),
        rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub damping_floor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iter: 200,
            armijo_c: 1e-4,
            backtrack: 0.5,
            damping_floor: 1e-10,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_tol > 0.0
            && self.max_iter > 0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.damping_floor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid solver configuration {self:?}"
            )))
        }
    }
}

/// Prior weight w₀: a scalar, or one weight per coordinate of a factorized prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PenaltyWeight {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PenaltyWeight {
    pub fn is_zero(&self) -> bool {
        match self {
            PenaltyWeight::Scalar(v) => *v == 0.0,
            PenaltyWeight::Vector(v) => v.iter().all(|&x| x == 0.0),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            PenaltyWeight::Scalar(v) => PenaltyWeight::Scalar(v * c),
            PenaltyWeight::Vector(v) => PenaltyWeight::Vector(v.iter().map(|x| x * c).collect()),
        }
    }
}

impl From<f64> for PenaltyWeight {
    fn from(v: f64) -> Self {
        PenaltyWeight::Scalar(v)
    }
}

impl From<DVector<f64>> for PenaltyWeight {
    fn from(v: DVector<f64>) -> Self {
        PenaltyWeight::Vector(v.iter().copied().collect())
    }
}

/// The term w₀ᵀ log π(θ) of a penalized objective.
#[derive(Clone, Copy)]
pub struct Penalty<'a> {
    prior: &'a dyn Prior,
    w0: &'a PenaltyWeight,
}

impl<'a> Penalty<'a> {
    pub fn new(prior: &'a dyn Prior, w0: &'a PenaltyWeight) -> Result<Self> {
        match w0 {
            PenaltyWeight::Scalar(v) if !(*v >= 0.0 && v.is_finite()) => {
                return Err(Error::Config(format!(
                    "prior weight must be finite and non-negative, got {v}"
                )));
            }
            PenaltyWeight::Vector(v) => {
                if v.len() != prior.dim() {
                    return Err(Error::Dimension {
                        expected: prior.dim(),
                        got: v.len(),
                    });
                }
                if !prior.factorized() {
                    return Err(Error::Config(
                        "a vector prior weight requires a factorized prior".into(),
                    ));
                }
                if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return Err(Error::Config(
                        "prior weights must be finite and non-negative".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(Self { prior, w0 })
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        match self.w0 {
            PenaltyWeight::Scalar(w) => w * self.prior.logpdf(theta),
            PenaltyWeight::Vector(w) => {
                let c = self
                    .prior
                    .coord_logpdf(theta)
                    .expect("factorized prior exposes coordinate terms");
                c.iter().zip(w).map(|(a, b)| a * b).sum()
            }
        }
    }

    fn accumulate(&self, theta: &DVector<f64>, acc: &mut Derivs) {
        let g = self.prior.grad(theta);
        let h = self.prior.hess(theta);
        acc.value += self.value(theta);
        match self.w0 {
            PenaltyWeight::Scalar(w) => {
                acc.grad.axpy(*w, &g, 1.0);
                acc.hess += &h * *w;
            }
            PenaltyWeight::Vector(w) => {
                for i in 0..g.len() {
                    acc.grad[i] += w[i] * g[i];
                    for j in 0..g.len() {
                        // Factorized priors have diagonal Hessians; scale symmetrically anyway.
                        acc.hess[(i, j)] += 0.5 * (w[i] + w[j]) * h[(i, j)];
                    }
                }
            }
        }
    }
}

/// Σ_blocks Σᵢ wᵢ ℓ(xᵢ, θ) + optional w₀ᵀ log π(θ).
pub struct Objective<'a> {
    model: &'a dyn ParametricModel,
    blocks: Vec<(&'a Dataset, &'a [f64])>,
    penalty: Option<Penalty<'a>>,
}

impl<'a> Objective<'a> {
    pub fn new(model: &'a dyn ParametricModel) -> Self {
        Self {
            model,
            blocks: Vec::new(),
            penalty: None,
        }
    }

    pub fn with_data(mut self, data: &'a Dataset, w: &'a [f64]) -> Result<Self> {
        if data.n() != w.len() {
            return Err(Error::Dimension {
                expected: data.n(),
                got: w.len(),
            });
        }
        if data.obs_dim() != self.model.obs_dim() {
            return Err(Error::Dimension {
                expected: self.model.obs_dim(),
                got: data.obs_dim(),
            });
        }
        self.blocks.push((data, w));
        Ok(self)
    }

    pub fn with_penalty(mut self, penalty: Option<Penalty<'a>>) -> Result<Self> {
        if let Some(p) = &penalty {
            if p.prior.dim() != self.model.dim() {
                return Err(Error::Dimension {
                    expected: self.model.dim(),
                    got: p.prior.dim(),
                });
            }
            if p.w0.is_zero() {
                self.penalty = None;
                return Ok(self);
            }
        }
        self.penalty = penalty;
        Ok(self)
    }

    /// Value and a magnitude scale for judging rounding error.
    fn value(&self, theta: &DVector<f64>) -> Option<(f64, f64)> {
        let mut acc = KahanSum::default();
        let mut scale = 0.0;
        for (data, w) in &self.blocks {
            for (x, &wi) in data.rows().zip(w.iter()) {
                let v = wi * self.model.loglik(x, theta);
                acc.add(v);
                scale += v.abs();
            }
        }
        if let Some(p) = &self.penalty {
            let v = p.value(theta);
            acc.add(v);
            scale += v.abs();
        }
        let v = acc.value();
        v.is_finite().then_some((v, scale))
    }

    pub fn derivs(&self, theta: &DVector<f64>) -> Derivs {
        let mut acc = Derivs::zeros(self.model.dim());
        for (data, w) in &self.blocks {
            for (x, &wi) in data.rows().zip(w.iter()) {
                self.model.accumulate(x, theta, wi, &mut acc);
            }
        }
        if let Some(p) = &self.penalty {
            p.accumulate(theta, &mut acc);
        }
        acc
    }
}

/// Maps natural coordinates to free coordinates.
pub fn to_free(domain: Domain, theta: &DVector<f64>) -> DVector<f64> {
    match domain {
        Domain::Unconstrained => theta.clone(),
        Domain::PositiveOrthant => theta.map(f64::ln),
        Domain::Simplex => {
            let d = theta.len();
            let last = theta[d - 1].ln();
            DVector::from_fn(d - 1, |l, _| theta[l].ln() - last)
        }
    }
}

/// Maps free coordinates back to natural coordinates.
pub fn to_natural(domain: Domain, eta: &DVector<f64>) -> DVector<f64> {
    match domain {
        Domain::Unconstrained => eta.clone(),
        Domain::PositiveOrthant => eta.map(f64::exp),
        Domain::Simplex => {
            let m = eta.iter().fold(0.0f64, |a, &b| a.max(b));
            let d = eta.len() + 1;
            let e = DVector::from_fn(d, |l, _| {
                if l + 1 < d {
                    (eta[l] - m).exp()
                } else {
                    (-m).exp()
                }
            });
            let s = e.sum();
            e / s
        }
    }
}

/// Gradient and Hessian in free coordinates from natural-coordinate derivatives.
pub fn chain_rule(
    domain: Domain,
    theta: &DVector<f64>,
    g: &DVector<f64>,
    h: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    match domain {
        Domain::Unconstrained => (g.clone(), h.clone()),
        Domain::PositiveOrthant => {
            let d = theta.len();
            let ge = theta.component_mul(g);
            let mut he = DMatrix::from_fn(d, d, |i, j| theta[i] * h[(i, j)] * theta[j]);
            for i in 0..d {
                he[(i, i)] += ge[i];
            }
            (ge, he)
        }
        Domain::Simplex => {
            let d = theta.len();
            let f = d - 1;
            let s: f64 = theta.dot(g);
            let m = DMatrix::from_fn(d, f, |l, j| {
                theta[l] * (if l == j { 1.0 } else { 0.0 } - theta[j])
            });
            let ge = DVector::from_fn(f, |j, _| theta[j] * (g[j] - s));
            let mut he = m.transpose() * h * &m;
            for j in 0..f {
                for k in 0..f {
                    let mut c = -theta[j] * theta[k] * (g[j] + g[k] - 2.0 * s);
                    if j == k {
                        c += theta[j] * (g[j] - s);
                    }
                    he[(j, k)] += c;
                }
            }
            (ge, he)
        }
    }
}

/// Result of a converged maximization.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub theta: DVector<f64>,
    pub iterations: usize,
    /// Sup-norm of the free-coordinate gradient at `theta`.
    pub grad_norm: f64,
}

fn free_state(
    obj: &Objective,
    domain: Domain,
    eta: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
    let theta = to_natural(domain, eta);
    let d = obj.derivs(&theta);
    let (g, h) = chain_rule(domain, &theta, &d.grad, &d.hess);
    (theta, g, h)
}

/// Damped Newton ascent with Armijo backtracking.
///
/// Steps whose predicted gain is below the objective's rounding resolution are
/// accepted when they reduce the gradient norm instead of by the Armijo test.
pub fn maximize(obj: &Objective, init: &DVector<f64>, cfg: &SolveConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let domain = obj.model.domain();
    if init.len() != obj.model.dim() {
        return Err(Error::Dimension {
            expected: obj.model.dim(),
            got: init.len(),
        });
    }
    if !domain.contains_interior(init) {
        return Err(Error::DomainBoundary(
            "initial point is not interior".into(),
        ));
    }
    let mut eta = to_free(domain, init);
    let (mut f, mut scale) = obj
        .value(init)
        .ok_or_else(|| Error::Solver("objective is not finite at the initial point".into()))?;
    let (mut theta, mut g, mut h) = free_state(obj, domain, &eta);
    let mut gnorm = g.amax();
    let k = eta.len();
    for it in 0..cfg.max_iter {
        if gnorm <= cfg.grad_tol {
            return Ok(SolveOutcome {
                theta,
                iterations: it,
                grad_norm: gnorm,
            });
        }
        if !gnorm.is_finite() {
            return Err(Error::Solver("non-finite gradient".into()));
        }
        let a = -&h;
        let mut mu = 0.0;
        let chol = loop {
            let mut am = a.clone();
            for i in 0..k {
                am[(i, i)] += mu;
            }
            if let Some(c) = Cholesky::new(am) {
                break c;
            }
            mu = if mu == 0.0 {
                cfg.damping_floor
            } else {
                mu * 2.0
            };
            if !(mu < 1e300) {
                return Err(Error::Solver(
                    "Hessian could not be made negative definite".into(),
                ));
            }
        };
        let p = chol.solve(&g);
        let slope = g.dot(&p);
        let resolution = 1e3 * f64::EPSILON * (1.0 + scale);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-20 {
            let cand = &eta + &p * t;
            let th = to_natural(domain, &cand);
            if domain.contains_interior(&th) {
                if let Some((fc, sc)) = obj.value(&th) {
                    if fc >= f + cfg.armijo_c * t * slope {
                        eta = cand;
                        f = fc;
                        scale = sc;
                        accepted = true;
                    } else if t * slope <= resolution {
                        let (th2, g2, h2) = free_state(obj, domain, &cand);
                        if g2.amax() < gnorm {
                            eta = cand;
                            f = fc;
                            scale = sc;
                            theta = th2;
                            g = g2;
                            h = h2;
                            gnorm = g.amax();
                            accepted = true;
                            t = -1.0;
                        }
                    }
                    if accepted {
                        break;
                    }
                }
            }
            t *= cfg.backtrack;
        }
        if !accepted {
            return Err(Error::Nonconvergence {
                iterations: it + 1,
                grad_norm: gnorm,
            });
        }
        if t >= 0.0 {
            let (th2, g2, h2) = free_state(obj, domain, &eta);
            theta = th2;
            g = g2;
            h = h2;
            gnorm = g.amax();
        }
    }
    if gnorm <= cfg.grad_tol {
        return Ok(SolveOutcome {
            theta,
            iterations: cfg.max_iter,
            grad_norm: gnorm,
        });
    }
    Err(Error::Nonconvergence {
        iterations: cfg.max_iter,
        grad_norm: gnorm,
    })
}

/// argmax_θ Σᵢ wᵢ ℓ(xᵢ, θ) + w₀ᵀ log π(θ).
pub fn weighted_penalized_argmax(
    model: &dyn ParametricModel,
    data: &Dataset,
    w: &WeightVector,
    penalty: Option<Penalty>,
    init: &ParamVector,
    cfg: &SolveConfig,
) -> Result<ParamVector> {
    let obj = Objective::new(model)
        .with_data(data, &w.w)?
        .with_penalty(penalty)?;
    ParamVector::new(maximize(&obj, init, cfg)?.theta)
}

/// Maximum-likelihood estimate; closed forms are used where the model provides one.
pub fn mle(model: &dyn ParametricModel, data: &Dataset, cfg: &SolveConfig) -> Result<ParamVector> {
    if data.n() == 0 {
        return Err(Error::Empty("dataset".into()));
    }
    if data.obs_dim() != model.obs_dim() {
        return Err(Error::Dimension {
            expected: model.obs_dim(),
            got: data.obs_dim(),
        });
    }
    if let Some(t) = model.closed_form_mle(data) {
        return ParamVector::new(t);
    }
    let ones = vec![1.0; data.n()];
    let obj = Objective::new(model).with_data(data, &ones)?;
    ParamVector::new(maximize(&obj, &model.initial_guess(data), cfg)?.theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        GammaShapeKnown, GaussianLocation, GaussianPrior, Multinomial, PoissonRegression,
    };

    fn gauss_data() -> Dataset {
        Dataset::from_column(&[0.3, 1.2, -0.4, 2.2, 0.9])
    }

    #[test]
    fn weights_examples() {
        assert!(draw_weights(0, 1.0, RngStream::new(1, 0)).is_empty());
        let w = draw_weights(100_000, 1.0, RngStream::new(1, 0));
        assert!((w.sum() / 1e5 - 1.0).abs() < 0.02);
        let w = draw_weights(100_000, 100.0 / 5.0, RngStream::new(1, 1));
        assert!((w.sum() / 1e5 - 0.05).abs() < 0.001);
        assert!(w.w.iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn gaussian_closed_form() {
        let m = GaussianLocation::new(1.0);
        let data = gauss_data();
        let prior = GaussianPrior::scalar(3.0, 0.5).unwrap();
        let w0 = PenaltyWeight::Scalar(2.0);
        let w = draw_weights(data.n(), 1.0, RngStream::new(3, 0));
        let init = ParamVector::from_slice(&[0.0]).unwrap();
        let t = weighted_penalized_argmax(
            &m,
            &data,
            &w,
            Some(Penalty::new(&prior, &w0).unwrap()),
            &init,
            &SolveConfig::default(),
        )
        .unwrap();
        let sx: f64 = data.rows().zip(&w.w).map(|(x, wi)| wi * x[0]).sum();
        let want = (sx + 2.0 * 3.0 / 0.5) / (w.sum() + 2.0 / 0.5);
        assert!((t[0] - want).abs() < 1e-8);
    }

    #[test]
    fn heavy_penalty_dominates() {
        let m = GaussianLocation::new(1.0);
        let prior = GaussianPrior::scalar(3.0, 1.0).unwrap();
        let w0 = PenaltyWeight::Scalar(1e6);
        let init = ParamVector::from_slice(&[0.0]).unwrap();
        let t = weighted_penalized_argmax(
            &m,
            &gauss_data(),
            &WeightVector::ones(5),
            Some(Penalty::new(&prior, &w0).unwrap()),
            &init,
            &SolveConfig::default(),
        )
        .unwrap();
        assert!((t[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn vector_weight_needs_factorized_prior() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let prior = GaussianPrior::new(DVector::zeros(2), cov).unwrap();
        let w0 = PenaltyWeight::Vector(vec![1.0, 2.0]);
        assert!(matches!(Penalty::new(&prior, &w0), Err(Error::Config(_))));
    }

    #[test]
    fn mle_numeric_and_closed() {
        let m = GaussianLocation::new(1.0);
        assert_eq!(
            mle(
                &m,
                &Dataset::from_column(&[1.0, 2.0, 3.0]),
                &SolveConfig::default()
            )
            .unwrap()[0],
            2.0
        );
        // Gamma with known shape: numerical path agrees with α / x̄.
        let g = GammaShapeKnown::new(2.0);
        let data = Dataset::from_column(&[0.5, 1.5, 2.0, 3.0]);
        let ones = vec![1.0; 4];
        let obj = Objective::new(&g).with_data(&data, &ones).unwrap();
        let out = maximize(
            &obj,
            &DVector::from_element(1, 5.0),
            &SolveConfig::default(),
        )
        .unwrap();
        assert!((out.theta[0] - 2.0 / 1.75).abs() < 1e-9);
    }

    #[test]
    fn multinomial_numeric_matches_proportions() {
        let m = Multinomial::new(4);
        let data =
            Dataset::from_rows(&[vec![3.0, 1.0, 4.0, 2.0], vec![1.0, 5.0, 0.0, 4.0]]).unwrap();
        let ones = vec![1.0; 2];
        let obj = Objective::new(&m).with_data(&data, &ones).unwrap();
        let out = maximize(
            &obj,
            &DVector::from_element(4, 0.25),
            &SolveConfig::default(),
        )
        .unwrap();
        let want = [0.2, 0.3, 0.2, 0.3];
        for (t, w) in out.theta.iter().zip(want) {
            assert!((t - w).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_regression_mle_first_order() {
        let m = PoissonRegression::new(2);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let z = (i as f64 - 25.0) / 20.0;
                vec![((i * 7) % 5) as f64, 1.0, z]
            })
            .collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let t = mle(&m, &data, &SolveConfig::default()).unwrap();
        let g: DVector<f64> = data
            .rows()
            .map(|x| m.grad(x, &t))
            .fold(DVector::zeros(2), |a, b| a + b);
        assert!(g.amax() < 1e-8);
    }

    #[test]
    fn reparam_round_trip() {
        let t = DVector::from_vec(vec![0.1, 0.6, 0.3]);
        let back = to_natural(Domain::Simplex, &to_free(Domain::Simplex, &t));
        assert!((back - &t).amax() < 1e-15);
        let p = DVector::from_vec(vec![0.2, 7.0]);
        assert!(
            (to_natural(
                Domain::PositiveOrthant,
                &to_free(Domain::PositiveOrthant, &p)
            ) - p)
                .amax()
                < 1e-14
        );
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        // f(θ) = Σ a_l log θ_l + b·θ_1θ_2 on the simplex and the positive orthant.
        let a = [1.3, 0.4, 2.2];
        let f = |t: &DVector<f64>| {
            a.iter().zip(t.iter()).map(|(a, t)| a * t.ln()).sum::<f64>() + 0.7 * t[0] * t[1]
        };
        let g = |t: &DVector<f64>| {
            DVector::from_vec(vec![
                a[0] / t[0] + 0.7 * t[1],
                a[1] / t[1] + 0.7 * t[0],
                a[2] / t[2],
            ])
        };
        let h = |t: &DVector<f64>| {
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    -a[0] / (t[0] * t[0]),
                    0.7,
                    0.0,
                    0.7,
                    -a[1] / (t[1] * t[1]),
                    0.0,
                    0.0,
                    0.0,
                    -a[2] / (t[2] * t[2]),
                ],
            )
        };
        for dom in [Domain::Simplex, Domain::PositiveOrthant] {
            let theta = DVector::from_vec(vec![0.2, 0.5, 0.3]);
            let eta = to_free(dom, &theta);
            let (ge, he) = chain_rule(dom, &theta, &g(&theta), &h(&theta));
            let step = 1e-5;
            for j in 0..eta.len() {
                let mut ep = eta.clone();
                let mut em = eta.clone();
                ep[j] += step;
                em[j] -= step;
                let (tp, tm) = (to_natural(dom, &ep), to_natural(dom, &em));
                let fd = (f(&tp) - f(&tm)) / (2.0 * step);
                assert!((fd - ge[j]).abs() < 1e-7, "{dom:?} grad {j}");
                let (gp, _) = chain_rule(dom, &tp, &g(&tp), &h(&tp));
                let (gm, _) = chain_rule(dom, &tm, &g(&tm), &h(&tm));
                for i in 0..eta.len() {
                    assert!(
                        ((gp[i] - gm[i]) / (2.0 * step) - he[(i, j)]).abs() < 1e-6,
                        "{dom:?} hess {i}{j}"
                    );
                }
            }
        }
    }

    #[test]
    fn nonconvergence_reported() {
        let m = GammaShapeKnown::new(2.0);
        let data = Dataset::from_column(&[0.5, 1.5, 2.0]);
        let ones = vec![1.0; 3];
        let obj = Objective::new(&m).with_data(&data, &ones).unwrap();
        let cfg = SolveConfig {
            max_iter: 1,
            ..Default::default()
        };
        assert!(matches!(
            maximize(&obj, &DVector::from_element(1, 50.0), &cfg),
            Err(Error::Nonconvergence { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(SolveConfig {
            backtrack: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SolveConfig::default().validate().is_ok());
    }
}
