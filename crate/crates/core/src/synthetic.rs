//! Deterministic synthetic datasets for the toy, count-regression and
//! hierarchical studies.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchical::{AllocationData, Group};
use crate::model::{sample_dirichlet, Dataset};
use crate::rng::RngStream;

/// Mean of the one-dimensional toy data.
pub const TOY1D_MEAN: f64 = 10.0;

/// Model noise covariance Σ₁ of the two-dimensional toy.
pub fn toy2d_sigma1() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0])
}

/// Data-generating covariance Σ₂ of the two-dimensional toy.
pub fn toy2d_sigma2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.7, 0.6, 0.6, 3.0])
}

pub const TOY2D_PRIOR_MEAN: [f64; 2] = [5.0, 5.0];

fn rng_for(seed: u64) -> rand_chacha::ChaCha8Rng {
    RngStream::new(seed, 0).rng()
}

/// n draws from N(10, σ²).
pub fn toy1d(sigma2: f64, n: usize, seed: u64) -> Result<Dataset> {
    if !(sigma2 > 0.0) || n == 0 {
        return Err(Error::Config("toy1d needs σ² > 0 and n ≥ 1".into()));
    }
    let dist = Normal::new(TOY1D_MEAN, sigma2.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng_for(seed);
    Ok(Dataset::from_column(
        &(0..n).map(|_| dist.sample(&mut rng)).collect::<Vec<_>>(),
    ))
}

/// n draws from N(mean, cov).
pub fn mv_normal(mean: &DVector<f64>, cov: &DMatrix<f64>, n: usize, seed: u64) -> Result<Dataset> {
    let l = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::Singular("covariance".into()))?
        .l();
    let d = mean.len();
    let mut rng = rng_for(seed);
    let mut v = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        v.extend((mean + &l * z).iter());
    }
    Dataset::new(v, d)
}

/// n draws from N((0, 0), Σ₂).
pub fn toy2d(n: usize, seed: u64) -> Result<Dataset> {
    mv_normal(&DVector::zeros(2), &toy2d_sigma2(), n, seed)
}

/// Departure from Poisson variance in synthetic count regressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Dispersion {
    /// Poisson counts.
    Equi,
    /// Negative binomial with mean μ and the given size (variance μ + μ²/size).
    Over { size: f64 },
    /// Binomial(n_trials, min(μ/n_trials, 1)) counts (variance below the mean).
    Under { n_trials: u64 },
}

/// Count regression rows [y, 1, z₁, …, z_p] with z ~ N(0, 1) and
/// E y = exp(β₀ + Σβ_j z_j). `beta` includes the intercept.
pub fn count_regression(
    beta: &[f64],
    n: usize,
    dispersion: Dispersion,
    seed: u64,
) -> Result<Dataset> {
    if beta.is_empty() || n == 0 {
        return Err(Error::Config(
            "count regression needs coefficients and n ≥ 1".into(),
        ));
    }
    let mut rng = rng_for(seed);
    let p = beta.len();
    let mut v = Vec::with_capacity(n * (p + 1));
    for _ in 0..n {
        let mut row = vec![0.0, 1.0];
        for _ in 1..p {
            row.push(StandardNormal.sample(&mut rng));
        }
        let eta: f64 = row[1..].iter().zip(beta).map(|(z, b)| z * b).sum();
        row[0] = count_draw(eta.exp(), dispersion, &mut rng)?;
        v.extend(row);
    }
    Dataset::new(v, p + 1)
}

fn count_draw(mu: f64, dispersion: Dispersion, rng: &mut dyn RngCore) -> Result<f64> {
    let err = |e: String| Error::Config(e);
    Ok(match dispersion {
        Dispersion::Equi => Poisson::new(mu)
            .map_err(|e| err(e.to_string()))?
            .sample(rng),
        Dispersion::Over { size } => negative_binomial(mu, size, rng)?,
        Dispersion::Under { n_trials } => {
            let p = (mu / n_trials as f64).min(1.0);
            Binomial::new(n_trials, p)
                .map_err(|e| err(e.to_string()))?
                .sample(rng) as f64
        }
    })
}

/// NB(mean μ, size ω) as a Gamma(ω, μ/ω) mixture of Poissons.
pub fn negative_binomial(mu: f64, size: f64, rng: &mut dyn RngCore) -> Result<f64> {
    let g = Gamma::new(size, mu / size)
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng);
    if g <= 0.0 {
        return Ok(0.0);
    }
    Ok(Poisson::new(g)
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng))
}

/// Groups of counts with means θ*_k: Poisson when `nb_size` is `None`,
/// otherwise negative binomial with that size. Group ids are 0..K.
pub fn gamma_poisson_groups(
    theta: &[f64],
    n_k: usize,
    nb_size: Option<f64>,
    seed: u64,
) -> Result<Vec<Group>> {
    let mut rng = rng_for(seed);
    theta
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let x = (0..n_k)
                .map(|_| match nb_size {
                    None => Ok(Poisson::new(t)
                        .map_err(|e| Error::Config(e.to_string()))?
                        .sample(&mut rng)),
                    Some(s) => negative_binomial(t, s, &mut rng),
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Group {
                id: k as u64,
                data: Dataset::from_column(&x),
            })
        })
        .collect()
}

/// K groups with θ_k ~ Dirichlet(λ) and n_k multinomial category counts.
pub fn dirichlet_allocation(
    lambda: &[f64],
    k: usize,
    n_k: u64,
    seed: u64,
) -> Result<AllocationData> {
    let mut rng = rng_for(seed);
    let mut counts = Vec::with_capacity(k);
    for _ in 0..k {
        let theta =
            sample_dirichlet(lambda, &mut rng).ok_or_else(|| Error::Config("invalid λ".into()))?;
        counts.push(multinomial(n_k, theta.as_slice(), &mut rng)?);
    }
    AllocationData::new(counts, None)
}

/// Multinomial counts by sequential conditional binomials.
pub fn multinomial(n: u64, p: &[f64], rng: &mut dyn RngCore) -> Result<Vec<u64>> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(p.len());
    for (l, &pl) in p.iter().enumerate() {
        if l + 1 == p.len() {
            out.push(left);
            break;
        }
        let q = if mass > 0.0 {
            (pl / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let c = Binomial::new(left, q)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng);
        out.push(c);
        left -= c;
        mass -= pl;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mean_cov;

    #[test]
    fn toy1d_shape_and_mean() {
        let d = toy1d(1.0, 200, 7).unwrap();
        assert_eq!(d.n(), 200);
        let m = d.column(0).iter().sum::<f64>() / 200.0;
        assert!((m - 10.0).abs() < 0.3);
        assert_eq!(d, toy1d(1.0, 200, 7).unwrap());
    }

    #[test]
    fn toy2d_covariance() {
        let d = toy2d(20_000, 1).unwrap();
        let (_, c) = mean_cov(&d.to_matrix());
        assert!((c - toy2d_sigma2()).abs().max() < 0.1);
    }

    #[test]
    fn dispersion_directions() {
        let beta = [0.5, 0.3, -0.2];
        let ratio = |disp| {
            let d = count_regression(&beta, 20_000, disp, 3).unwrap();
            let y = d.column(0);
            let m = y.iter().sum::<f64>() / y.len() as f64;
            // Pearson dispersion against the true mean function.
            let r: f64 = d
                .rows()
                .map(|row| {
                    let mu = (beta[0] + beta[1] * row[2] + beta[2] * row[3]).exp();
                    (row[0] - mu).powi(2) / mu
                })
                .sum::<f64>()
                / y.len() as f64;
            (m, r)
        };
        assert!(ratio(Dispersion::Over { size: 2.0 }).1 > 1.3);
        assert!(ratio(Dispersion::Under { n_trials: 5 }).1 < 0.8);
        assert!((ratio(Dispersion::Equi).1 - 1.0).abs() < 0.05);
    }

    #[test]
    fn allocation_rows_sum() {
        let a = dirichlet_allocation(&[12.0, 12.0, 12.0, 10.0, 10.0, 10.0], 300, 1000, 2).unwrap();
        assert_eq!(a.counts.len(), 300);
        assert!(a
            .counts
            .iter()
            .all(|r| r.len() == 6 && r.iter().sum::<u64>() == 1000));
    }

    #[test]
    fn multinomial_means() {
        let mut rng = rng_for(4);
        let p = [0.2, 0.5, 0.3];
        let mut tot = [0u64; 3];
        for _ in 0..2000 {
            let c = multinomial(10, &p, &mut rng).unwrap();
            for l in 0..3 {
                tot[l] += c[l];
            }
        }
        for l in 0..3 {
            assert!((tot[l] as f64 / 20_000.0 - p[l]).abs() < 0.02);
        }
    }

    #[test]
    fn nb_groups() {
        let g = gamma_poisson_groups(&[1.0, 2.0, 4.0], 100, Some(0.7), 1).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|gr| gr.data.n() == 100));
    }
}
