//! Fixed benchmark inputs shared by the criterion benches.

use pb_core::hierarchical::{AllocationData, Group};
use pb_core::synthetic::{
    count_regression, dirichlet_allocation, gamma_poisson_groups, toy1d, toy2d, Dispersion,
};
use pb_core::Dataset;

pub const SEED: u64 = 7;

/// N(10, 2.8) sample of size n.
pub fn gaussian_data(n: usize) -> Dataset {
    toy1d(2.8, n, SEED).expect("valid toy1d parameters")
}

/// Bivariate toy data of size n.
pub fn toy2d_data(n: usize) -> Dataset {
    toy2d(n, SEED).expect("valid toy2d parameters")
}

/// Overdispersed counts with an intercept and two covariates.
pub fn count_data(n: usize) -> Dataset {
    count_regression(&[0.5, 0.3, -0.2], n, Dispersion::Over { size: 2.0 }, SEED)
        .expect("valid regression parameters")
}

pub fn gamma_poisson(k: usize, n_k: usize) -> Vec<Group> {
    let theta: Vec<f64> = (0..k).map(|i| 1.0 + (i % 4) as f64).collect();
    gamma_poisson_groups(&theta, n_k, None, SEED).expect("valid group parameters")
}

pub fn allocation(k: usize, n_k: u64) -> AllocationData {
    dirichlet_allocation(&[12.0, 12.0, 12.0, 10.0, 10.0, 10.0], k, n_k, SEED)
        .expect("valid allocation parameters")
}
