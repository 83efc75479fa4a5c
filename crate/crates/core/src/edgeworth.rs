//! One-dimensional Edgeworth expansion of posterior bootstrap draws, the
//! Bartlett-identity residual and the prior term of the multivariate expansion.

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::InfoEstimates;
use crate::linalg::pd_inv_sqrt;
use crate::model::{Dataset, JeffreysPrior, ParamVector, ParametricModel, Prior};
use crate::rng::RngStream;
use crate::solve::{mle, PenaltyWeight, SolveConfig};

/// Third central moment of Exp(1) weights.
pub const GAMMA_EXP1: f64 = 2.0;

/// Plug-in quantities entering the cumulants κ₁ and κ₃.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeworthInputs {
    /// E(∇ℓ)².
    pub i: f64,
    /// −E D²ℓ.
    pub j: f64,
    /// E D³ℓ.
    pub mu3: f64,
    /// E(∇ℓ)³.
    pub a3: f64,
    /// E[D²ℓ·∇ℓ].
    pub l12: f64,
    /// ∇log π at the expansion point.
    pub prior_score: f64,
    pub w0: f64,
    /// Third central moment of the weight law.
    pub gamma_w: f64,
    pub n: usize,
    /// Standard error of the A₃ sample average; zero when not estimated.
    #[serde(default)]
    pub a3_se: f64,
}

impl EdgeworthInputs {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.i,
            self.j,
            self.mu3,
            self.a3,
            self.l12,
            self.prior_score,
            self.w0,
            self.gamma_w,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("edgeworth inputs".into()));
        }
        if !(self.i > 0.0 && self.j > 0.0) || self.n == 0 || self.w0 < 0.0 {
            return Err(Error::Config(
                "edgeworth inputs need I > 0, J > 0, n ≥ 1, w0 ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Sample averages of the derivative moments at θ̂, plus the prior score.
/// `prior = None` is the flat prior.
pub fn edgeworth_inputs_at(
    model: &dyn ParametricModel,
    data: &Dataset,
    theta_hat: &ParamVector,
    prior: Option<&dyn Prior>,
    w0: f64,
) -> Result<EdgeworthInputs> {
    if model.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: model.dim(),
        });
    }
    if data.n() == 0 {
        return Err(Error::Empty("dataset".into()));
    }
    let m = Moments::collect(model, data.rows(), theta_hat)?;
    let prior_score = match prior {
        Some(p) => p.grad(theta_hat)[0],
        None => 0.0,
    };
    let (a3, a3_se) = mean_and_se(&m.a3);
    let inp = EdgeworthInputs {
        i: m.i.iter().sum::<f64>() / data.n() as f64,
        j: -m.d2.iter().sum::<f64>() / data.n() as f64,
        mu3: m.mu3.iter().sum::<f64>() / data.n() as f64,
        a3,
        l12: m.l12.iter().sum::<f64>() / data.n() as f64,
        prior_score,
        w0,
        gamma_w: GAMMA_EXP1,
        n: data.n(),
        a3_se,
    };
    inp.validate()?;
    Ok(inp)
}

/// As [`edgeworth_inputs_at`], at the maximum-likelihood estimate.
pub fn estimate_edgeworth_inputs(
    model: &dyn ParametricModel,
    data: &Dataset,
    prior: Option<&dyn Prior>,
    w0: f64,
    cfg: &SolveConfig,
) -> Result<EdgeworthInputs> {
    if model.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: model.dim(),
        });
    }
    let theta_hat = mle(model, data, cfg)?;
    edgeworth_inputs_at(model, data, &theta_hat, prior, w0)
}

/// Per-observation derivative products.
struct Moments {
    i: Vec<f64>,
    d2: Vec<f64>,
    mu3: Vec<f64>,
    a3: Vec<f64>,
    l12: Vec<f64>,
}

impl Moments {
    fn collect<'a>(
        model: &dyn ParametricModel,
        rows: impl Iterator<Item = &'a [f64]>,
        theta: &DVector<f64>,
    ) -> Result<Self> {
        let mut out = Moments {
            i: vec![],
            d2: vec![],
            mu3: vec![],
            a3: vec![],
            l12: vec![],
        };
        for x in rows {
            let g = model.grad(x, theta)[0];
            let h = model.hess(x, theta)[(0, 0)];
            let t = model.third(x, theta).ok_or_else(|| {
                Error::Unsupported(format!("{} has no third derivative", model.name()))
            })?;
            out.i.push(g * g);
            out.d2.push(h);
            out.mu3.push(t);
            out.a3.push(g * g * g);
            out.l12.push(h * g);
        }
        Ok(out)
    }
}

/// (κ₁, κ₃) of the expansion of I^{−1/2}J√n(θ̃ − θ̂).
pub fn kappa_coeffs(inp: &EdgeworthInputs) -> Result<(f64, f64)> {
    inp.validate()?;
    let rn = (inp.n as f64).sqrt();
    let (sqi, j) = (inp.i.sqrt(), inp.j);
    let k1 = inp.w0 * inp.prior_score / (rn * sqi)
        + inp.mu3 * sqi / (2.0 * rn * j * j)
        + inp.l12 / (rn * sqi * j);
    let k3 = inp.gamma_w * inp.a3 / (rn * inp.i.powf(1.5))
        + 3.0 * inp.mu3 * sqi / (rn * j * j)
        + 6.0 * inp.l12 / (rn * sqi * j);
    Ok((k1, k3))
}

/// Reduced cumulants for a well-specified model with Exp(1) weights
/// (I = J and −L₁₂ = (μ₃ + A₃)/3).
pub fn kappa_well_specified(inp: &EdgeworthInputs) -> Result<(f64, f64)> {
    inp.validate()?;
    let rn = (inp.n as f64).sqrt();
    let i32 = inp.i.powf(1.5);
    let k1 = inp.w0 * inp.prior_score / (rn * inp.i.sqrt()) + inp.mu3 / (6.0 * rn * i32)
        - inp.a3 / (3.0 * rn * i32);
    Ok((k1, inp.mu3 / (rn * i32)))
}

/// φ(y){1 + κ₁y + κ₃(y³ − 3y)/6}.
pub fn edgeworth_density(y: f64, kappa1: f64, kappa3: f64) -> f64 {
    normal_density(y) * (1.0 + kappa1 * y + kappa3 * (y * y * y - 3.0 * y) / 6.0)
}

pub fn normal_density(y: f64) -> f64 {
    (-0.5 * y * y).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Rows (y, edgeworth density, normal density) on an even grid.
pub fn density_grid(kappa1: f64, kappa3: f64, lo: f64, hi: f64, points: usize) -> Vec<[f64; 3]> {
    let step = if points > 1 {
        (hi - lo) / (points - 1) as f64
    } else {
        0.0
    };
    (0..points)
        .map(|k| {
            let y = lo + step * k as f64;
            [y, edgeworth_density(y, kappa1, kappa3), normal_density(y)]
        })
        .collect()
}

/// Monte-Carlo check of −L₁₂ = (μ₃ + A₃)/3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BartlettReport {
    /// |mean of −D²ℓ·∇ℓ − (D³ℓ + (∇ℓ)³)/3|.
    pub residual: f64,
    pub se: f64,
    pub mu3: f64,
    pub a3: f64,
    pub l12: f64,
    pub m: usize,
}

/// Bartlett residual with observations drawn from an arbitrary sampler.
pub fn bartlett_residual_with(
    model: &dyn ParametricModel,
    theta: &ParamVector,
    sampler: &dyn Fn(&mut dyn RngCore) -> Vec<f64>,
    m: usize,
    seed: u64,
) -> Result<BartlettReport> {
    if model.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            got: model.dim(),
        });
    }
    if m < 2 {
        return Err(Error::Config(
            "need at least two Monte-Carlo samples".into(),
        ));
    }
    let mut rng = RngStream::new(seed, 0).rng();
    let mut xs = Vec::with_capacity(m * model.obs_dim());
    for _ in 0..m {
        xs.extend(sampler(&mut rng));
    }
    let data = Dataset::new(xs, model.obs_dim())?;
    let mo = Moments::collect(model, data.rows(), theta)?;
    let terms: Vec<f64> = (0..m)
        .map(|k| -mo.l12[k] - (mo.mu3[k] + mo.a3[k]) / 3.0)
        .collect();
    let (r, se) = mean_and_se(&terms);
    let avg = |v: &[f64]| v.iter().sum::<f64>() / m as f64;
    Ok(BartlettReport {
        residual: r.abs(),
        se,
        mu3: avg(&mo.mu3),
        a3: avg(&mo.a3),
        l12: avg(&mo.l12),
        m,
    })
}

/// Bartlett residual under the model itself, x ~ f(·|θ*).
pub fn bartlett_residual(
    model: &dyn ParametricModel,
    theta: &ParamVector,
    m: usize,
    seed: u64,
) -> Result<BartlettReport> {
    let probe = model.sample_obs(theta, &mut RngStream::new(seed, u64::MAX).rng());
    if probe.is_none() {
        return Err(Error::Unsupported(format!(
            "{} cannot sample observations",
            model.name()
        )));
    }
    let sampler =
        |rng: &mut dyn RngCore| model.sample_obs(theta, rng).expect("sampler probed above");
    bartlett_residual_with(model, theta, &sampler, m, seed)
}

/// I_n^{−1/2}(w0 ∘ ∇log π(θ̂))/√n.
pub fn prior_term_multivariate(
    info: &InfoEstimates,
    prior: &dyn Prior,
    w0: &PenaltyWeight,
    n: usize,
) -> Result<DVector<f64>> {
    let d = info.dim();
    if prior.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: prior.dim(),
        });
    }
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let w = match w0 {
        PenaltyWeight::Scalar(s) => DVector::from_element(d, *s),
        PenaltyWeight::Vector(v) => {
            if v.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: v.len(),
                });
            }
            if !prior.factorized() {
                return Err(Error::Config(
                    "a vector prior weight needs a factorized prior".into(),
                ));
            }
            DVector::from_column_slice(v)
        }
    };
    let score = prior.grad(&info.theta_hat);
    let inv_sqrt = pd_inv_sqrt(&info.i_n, "I_n")?;
    Ok(inv_sqrt * w.component_mul(&score) / (n as f64).sqrt())
}

/// Two forms of the Jeffreys score at θ̂: the analytic I′/(2I) and the form
/// −(A₃ + μ₃)/(3I^{3/2}) obtained through L₁₂ and the Bartlett identity.
/// They agree only when I′ = 2L₁₂; in general I′ = 2L₁₂ + A₃.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JeffreysTerms {
    pub analytic: f64,
    pub bartlett_form: f64,
    pub gap: f64,
}

pub fn jeffreys_terms(
    inp: &EdgeworthInputs,
    prior: &JeffreysPrior,
    theta_hat: f64,
) -> Result<JeffreysTerms> {
    inp.validate()?;
    let i = prior.info(theta_hat);
    if !(i > 0.0) {
        return Err(Error::DomainBoundary(
            "Jeffreys information must be positive".into(),
        ));
    }
    let analytic = prior.d_info(theta_hat) / (2.0 * i);
    let bartlett_form = -(inp.a3 + inp.mu3) / (3.0 * inp.i.powf(1.5));
    Ok(JeffreysTerms {
        analytic,
        bartlett_form,
        gap: analytic - bartlett_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Domain, GammaShapeKnown, GaussianLocation, GaussianPrior};
    use nalgebra::DMatrix;

    fn base() -> EdgeworthInputs {
        EdgeworthInputs {
            i: 1.0,
            j: 1.0,
            mu3: 0.0,
            a3: 0.0,
            l12: 0.0,
            prior_score: 0.0,
            w0: 1.0,
            gamma_w: 2.0,
            n: 100,
            a3_se: 0.0,
        }
    }

    #[test]
    fn kappa_substitution() {
        let inp = EdgeworthInputs {
            prior_score: 0.7,
            ..base()
        };
        let (k1, k3) = kappa_coeffs(&inp).unwrap();
        assert!((k1 - 0.07).abs() < 1e-15);
        assert_eq!(k3, 0.0);
    }

    #[test]
    fn kappa_homogeneity() {
        let inp = EdgeworthInputs {
            i: 1.3,
            j: 0.8,
            mu3: 0.4,
            a3: -0.9,
            l12: 0.2,
            prior_score: 1.1,
            w0: 0.6,
            ..base()
        };
        let (a1, a3) = kappa_coeffs(&inp).unwrap();
        let (b1, b3) = kappa_coeffs(&EdgeworthInputs { n: 400, ..inp }).unwrap();
        assert!((a1 - 2.0 * b1).abs() < 1e-15 && (a3 - 2.0 * b3).abs() < 1e-15);
    }

    #[test]
    fn gaussian_inputs_exact() {
        let x = [0.3, 2.0, -1.1, 4.2, 0.0, 1.5];
        let d = Dataset::from_column(&x);
        let m = GaussianLocation::new(1.0);
        let inp = estimate_edgeworth_inputs(&m, &d, None, 1.0, &SolveConfig::default()).unwrap();
        let xb = x.iter().sum::<f64>() / 6.0;
        let a3 = x.iter().map(|v| (v - xb).powi(3)).sum::<f64>() / 6.0;
        assert_eq!(inp.mu3, 0.0);
        assert!((inp.a3 - a3).abs() < 1e-12);
        assert!(inp.l12.abs() < 1e-12);
        assert_eq!(inp.j, 1.0);
    }

    #[test]
    fn density_reduces_to_normal() {
        for y in [-2.0, 0.0, 0.4, 3.1] {
            assert_eq!(edgeworth_density(y, 0.0, 0.0), normal_density(y));
        }
        assert_eq!(edgeworth_density(0.0, 5.0, -3.0), normal_density(0.0));
    }

    #[test]
    fn density_integrates_to_one() {
        for (k1, k3) in [(0.3, -0.5), (-1.0, 2.0), (0.0, 0.1)] {
            let g = density_grid(k1, k3, -12.0, 12.0, 24001);
            let h = 24.0 / 24000.0;
            let total: f64 = g
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    if i == 0 || i == g.len() - 1 {
                        0.5 * r[1]
                    } else {
                        r[1]
                    }
                })
                .sum::<f64>()
                * h;
            assert!((total - 1.0).abs() < 1e-8, "{total}");
        }
    }

    #[test]
    fn gamma_bartlett_holds() {
        let m = GammaShapeKnown::new(2.0);
        let r =
            bartlett_residual(&m, &ParamVector::from_slice(&[1.0]).unwrap(), 20_000, 3).unwrap();
        assert!(r.residual < 3.0 * r.se, "{r:?}");
        assert!((r.mu3 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn prior_term_examples() {
        let theta = ParamVector::from_slice(&[0.0]).unwrap();
        let info = InfoEstimates::from_matrices(
            DMatrix::from_element(1, 1, 4.0),
            DMatrix::from_element(1, 1, 4.0),
            theta,
            100,
        )
        .unwrap();
        // N(2, 1) prior has score 2 at 0.
        let prior = GaussianPrior::scalar(2.0, 1.0).unwrap();
        let t = prior_term_multivariate(&info, &prior, &PenaltyWeight::Scalar(1.0), 100).unwrap();
        assert!((t[0] - 0.1).abs() < 1e-12, "{}", t[0]);
        let flat = crate::model::FlatPrior::new(1, Domain::Unconstrained);
        assert_eq!(
            prior_term_multivariate(&info, &flat, &PenaltyWeight::Scalar(1.0), 100).unwrap()[0],
            0.0
        );
    }

    #[test]
    fn jeffreys_gap_for_gamma() {
        // Gamma rate model with α = 2 at λ = 1: I′/(2I) = −1 while A₃ + μ₃ = 0.
        let inp = EdgeworthInputs {
            i: 2.0,
            j: 2.0,
            mu3: 4.0,
            a3: -4.0,
            ..base()
        };
        let p = JeffreysPrior::new(
            |l| 2.0 / (l * l),
            |l| -4.0 / l.powi(3),
            |l| 12.0 / l.powi(4),
            Domain::PositiveOrthant,
        );
        let t = jeffreys_terms(&inp, &p, 1.0).unwrap();
        assert!((t.analytic + 1.0).abs() < 1e-15);
        assert_eq!(t.bartlett_form, 0.0);
    }

    #[test]
    fn rejects_multivariate() {
        let m = crate::model::PoissonRegression::new(2);
        let d = Dataset::from_rows(&[vec![1.0, 1.0, 0.5]]).unwrap();
        assert!(matches!(
            edgeworth_inputs_at(
                &m,
                &d,
                &ParamVector::from_slice(&[0.0, 0.0]).unwrap(),
                None,
                0.0
            ),
            Err(Error::Dimension { .. })
        ));
    }
}
