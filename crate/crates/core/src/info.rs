//! Empirical information matrices, the sandwich covariance and the automatic
//! prior-weight rules.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{pd_eigen, pd_inv_sqrt, pd_inverse, psd_sqrt, sym_eigenvalues, symmetrize};
use crate::model::{ConditionalPrior, Dataset, LambdaModel, ParamVector, ParametricModel, Prior};
use crate::solve::PenaltyWeight;

/// I_n = (1/n)Σ∇ℓ∇ℓᵀ and J_n = −(1/n)ΣD²ℓ at θ̂.
#[derive(Debug, Clone)]
pub struct InfoEstimates {
    pub i_n: DMatrix<f64>,
    pub j_n: DMatrix<f64>,
    pub theta_hat: ParamVector,
    pub n: usize,
}

impl InfoEstimates {
    /// Wraps given matrices, checking shapes only.
    pub fn from_matrices(
        i_n: DMatrix<f64>,
        j_n: DMatrix<f64>,
        theta_hat: ParamVector,
        n: usize,
    ) -> Result<Self> {
        let d = theta_hat.len();
        for m in [&i_n, &j_n] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: m.nrows(),
                });
            }
        }
        Ok(Self {
            i_n,
            j_n,
            theta_hat,
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }
}

pub fn empirical_info(
    model: &dyn ParametricModel,
    data: &Dataset,
    theta_hat: &ParamVector,
) -> Result<InfoEstimates> {
    let n = data.n();
    if n == 0 {
        return Err(Error::Empty("dataset".into()));
    }
    let d = model.dim();
    if theta_hat.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: theta_hat.len(),
        });
    }
    let mut i_n = DMatrix::zeros(d, d);
    let mut j_n = DMatrix::zeros(d, d);
    let mut gsum = DVector::zeros(d);
    for x in data.rows() {
        let g = model.grad(x, theta_hat);
        i_n += &g * g.transpose();
        j_n -= model.hess(x, theta_hat);
        gsum += g;
    }
    i_n /= n as f64;
    j_n /= n as f64;
    if gsum.amax() > 1e-6 * n as f64 {
        warn!(
            "score sum {:e} at θ̂ exceeds 1e-6·n; θ̂ may not be the MLE",
            gsum.amax()
        );
    }
    let info = InfoEstimates {
        i_n: symmetrize(&i_n),
        j_n: symmetrize(&j_n),
        theta_hat: theta_hat.clone(),
        n,
    };
    pd_eigen(&info.j_n, "J_n")?;
    Ok(info)
}

/// J_n⁻¹ I_n J_n⁻¹.
pub fn sandwich(info: &InfoEstimates) -> Result<DMatrix<f64>> {
    let jinv = pd_inverse(&info.j_n, "J_n")?;
    Ok(symmetrize(&(&jinv * &info.i_n * &jinv)))
}

fn matched_matrix(info: &InfoEstimates) -> Result<DMatrix<f64>> {
    let jinv = pd_inverse(&info.j_n, "J_n")?;
    let (root, clipped) = psd_sqrt(&info.i_n);
    if clipped > 0 {
        warn!("clipped {clipped} negative eigenvalue(s) of I_n to zero");
    }
    Ok(symmetrize(&(&root * jinv * &root)))
}

/// w₀* = diag(I_n^{1/2} J_n⁻¹ I_n^{1/2}), entries clipped at 0.
pub fn w0_star(info: &InfoEstimates) -> Result<DVector<f64>> {
    let m = matched_matrix(info)?;
    let diag = m.diagonal();
    if diag.iter().any(|&v| v < 0.0) {
        warn!("negative diagonal entry in w0* clipped to zero");
    }
    Ok(diag.map(|v| v.max(0.0)))
}

/// w̄₀* = tr(I_n^{1/2} J_n⁻¹ I_n^{1/2}) / d.
pub fn w0_bar(info: &InfoEstimates) -> Result<f64> {
    let m = matched_matrix(info)?;
    Ok((m.trace() / info.dim() as f64).max(0.0))
}

/// Pseudo-sample budget c* = w̄₀*·n₀ for a conjugate prior of effective sample size n₀.
pub fn c_star(info: &InfoEstimates, n0: f64) -> Result<f64> {
    if !(n0 > 0.0) {
        return Err(Error::Config("n0 must be positive".into()));
    }
    Ok(w0_bar(info)? * n0)
}

/// Ascending eigenvalues of J_n^{-1/2} I_n J_n^{-1/2}.
pub fn eigenvalues(info: &InfoEstimates) -> Result<Vec<f64>> {
    let s = pd_inv_sqrt(&info.j_n, "J_n")?;
    Ok(sym_eigenvalues(&(&s * &info.i_n * &s)))
}

/// (1/2n)Σ(λᵢ−1)(λᵢ−η⁻¹): expected risk of the η-power posterior minus that of
/// the weighted likelihood bootstrap. Negative means the power posterior wins.
pub fn risk_difference(eigenvalues: &[f64], eta: f64, n: usize) -> f64 {
    assert!(eta > 0.0 && n >= 1, "eta > 0 and n ≥ 1");
    eigenvalues
        .iter()
        .map(|l| (l - 1.0) * (l - 1.0 / eta))
        .sum::<f64>()
        / (2.0 * n as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperParams {
    pub w0_vec: Vec<f64>,
    pub w0_bar: f64,
    pub sandwich: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

pub fn hyper_params(info: &InfoEstimates) -> Result<HyperParams> {
    let s = sandwich(info)?;
    Ok(HyperParams {
        w0_vec: w0_star(info)?.iter().copied().collect(),
        w0_bar: w0_bar(info)?,
        sandwich: (0..s.nrows())
            .map(|i| s.row(i).iter().copied().collect())
            .collect(),
        eigenvalues: eigenvalues(info)?,
    })
}

/// w₀* for a factorized prior, otherwise w̄₀* (logged).
pub fn prior_weight_rule(info: &InfoEstimates, prior: &dyn Prior) -> Result<PenaltyWeight> {
    if prior.factorized() {
        Ok(w0_star(info)?.into())
    } else {
        log::info!("prior does not factorize; using the scalar weight w0_bar");
        Ok(PenaltyWeight::Scalar(w0_bar(info)?))
    }
}

/// Information-based weight for the hyperprior p(λ), from I_g and J_g over the group estimates.
pub fn wg_for_hyperprior(
    thetas: &[DVector<f64>],
    g: Arc<dyn ConditionalPrior>,
    lambda_hat: &ParamVector,
    hyperprior: &dyn Prior,
) -> Result<PenaltyWeight> {
    let dl = g.lambda_dim();
    if thetas.len() < dl + 1 {
        return Err(Error::Rank(format!(
            "{} groups cannot identify a {dl}-dimensional λ",
            thetas.len()
        )));
    }
    let data = crate::model::conditional_thetas_dataset(thetas);
    let info = empirical_info(&LambdaModel::new(g), &data, lambda_hat)?;
    prior_weight_rule(&info, hyperprior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GaussianLocation, GaussianPrior};

    fn info(i: &[f64], j: &[f64], d: usize) -> InfoEstimates {
        InfoEstimates::from_matrices(
            DMatrix::from_row_slice(d, d, i),
            DMatrix::from_row_slice(d, d, j),
            ParamVector::new(DVector::zeros(d)).unwrap(),
            10,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_info_is_residual_variance() {
        let m = GaussianLocation::new(1.0);
        let data = Dataset::from_column(&[1.0, 2.0, 4.0, 5.0]);
        let t = ParamVector::from_slice(&[3.0]).unwrap();
        let inf = empirical_info(&m, &data, &t).unwrap();
        assert_eq!(inf.j_n[(0, 0)], 1.0);
        assert_eq!(inf.i_n[(0, 0)], 2.5);
    }

    #[test]
    fn sandwich_examples() {
        let id = [1.0, 0.0, 0.0, 1.0];
        assert!((sandwich(&info(&id, &id, 2)).unwrap() - DMatrix::identity(2, 2)).norm() < 1e-15);
        assert!((sandwich(&info(&[2.8], &[1.0], 1)).unwrap()[(0, 0)] - 2.8).abs() < 1e-15);
        let s = sandwich(&info(&[2.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 2.0], 2)).unwrap();
        assert!((s - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.25])).norm() < 1e-15);
    }

    #[test]
    fn w0_examples() {
        let id = [1.0, 0.0, 0.0, 1.0];
        let w = w0_star(&info(&id, &id, 2)).unwrap();
        assert!((w - DVector::from_element(2, 1.0)).amax() < 1e-12);
        assert!((w0_bar(&info(&id, &id, 2)).unwrap() - 1.0).abs() < 1e-12);
        let inf = info(&[2.0, 1.0, 1.0, 2.0], &id, 2);
        assert!((w0_star(&inf).unwrap() - DVector::from_element(2, 2.0)).amax() < 1e-12);
        assert!((w0_bar(&inf).unwrap() - 2.0).abs() < 1e-12);
        let one = info(&[1.7], &[0.4], 1);
        assert_eq!(w0_star(&one).unwrap()[0], w0_bar(&one).unwrap());
        assert!((w0_bar(&one).unwrap() - 1.7 / 0.4).abs() < 1e-12);
    }

    #[test]
    fn singular_j() {
        let inf = info(&[1.0, 0.0, 0.0, 1.0], &[1.0, 1.0, 1.0, 1.0], 2);
        assert!(matches!(sandwich(&inf), Err(Error::Singular(_))));
        assert!(matches!(w0_star(&inf), Err(Error::Singular(_))));
    }

    #[test]
    fn c_star_examples() {
        let id = [1.0];
        assert!((c_star(&info(&id, &id, 1), 7.0).unwrap() - 7.0).abs() < 1e-12);
        assert!((c_star(&info(&[2.8], &id, 1), 1.0).unwrap() - 2.8).abs() < 1e-12);
    }

    #[test]
    fn risk_difference_examples() {
        assert_eq!(risk_difference(&[1.0, 1.0], 0.3, 10), 0.0);
        assert!((risk_difference(&[1.5], 0.5, 50) + 0.0025).abs() < 1e-15);
        assert!((risk_difference(&[2.0, 3.0], 0.25, 100) + 0.02).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_match_nonsymmetric_route() {
        let inf = info(&[2.0, 0.3, 0.3, 1.0], &[1.5, -0.2, -0.2, 0.8], 2);
        let a = eigenvalues(&inf).unwrap();
        let jinv = pd_inverse(&inf.j_n, "J").unwrap();
        let mut b: Vec<f64> = (jinv * &inf.i_n)
            .complex_eigenvalues()
            .iter()
            .map(|c| c.re)
            .collect();
        b.sort_by(|x, y| x.total_cmp(y));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn weight_rule_falls_back_for_correlated_prior() {
        let inf = info(&[2.0, 0.0, 0.0, 1.0], &[1.0, 0.0, 0.0, 1.0], 2);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let p = GaussianPrior::new(DVector::zeros(2), cov).unwrap();
        match prior_weight_rule(&inf, &p).unwrap() {
            PenaltyWeight::Scalar(v) => assert!((v - 1.5).abs() < 1e-12),
            other => panic!("expected scalar weight, got {other:?}"),
        }
        let p = GaussianPrior::isotropic(DVector::zeros(2), 1.0).unwrap();
        assert!(matches!(
            prior_weight_rule(&inf, &p).unwrap(),
            PenaltyWeight::Vector(_)
        ));
    }
}
