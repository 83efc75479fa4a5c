//! Small dense symmetric-matrix helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a matrix is treated as singular.
pub const EIG_FLOOR: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn rebuild(e: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let d = DVector::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|&v| f(v)));
    let q = &e.eigenvectors;
    symmetrize(&(q * DMatrix::from_diagonal(&d) * q.transpose()))
}

/// Symmetric PSD square root; negative eigenvalues are clipped to zero.
/// Returns the root and the number of clipped eigenvalues.
pub fn psd_sqrt(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let e = SymmetricEigen::new(symmetrize(m));
    let clipped = e.eigenvalues.iter().filter(|&&v| v < 0.0).count();
    (rebuild(&e, |v| v.max(0.0).sqrt()), clipped)
}

/// Eigendecomposition of a symmetric matrix that must be positive definite
/// with min eigenvalue above `EIG_FLOOR` times the max.
pub fn pd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let e = SymmetricEigen::new(symmetrize(m));
    let max = e.eigenvalues.max();
    let min = e.eigenvalues.min();
    if !(max > 0.0) || !(min > EIG_FLOOR * max) || !min.is_finite() {
        return Err(Error::Singular(format!(
            "{what}: eigenvalues in [{min:e}, {max:e}]"
        )));
    }
    Ok(e)
}

pub fn pd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(rebuild(&pd_eigen(m, what)?, |v| 1.0 / v))
}

pub fn pd_inv_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(rebuild(&pd_eigen(m, what)?, |v| 1.0 / v.sqrt()))
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// ‖a − b‖_F / ‖b‖_F.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Sample mean (rows are observations) and unbiased covariance.
pub fn mean_cov(rows: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.nrows();
    let d = rows.ncols();
    let mean = DVector::from_iterator(d, (0..d).map(|j| rows.column(j).sum() / n as f64));
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let r = rows.row(i).transpose() - &mean;
        cov += &r * r.transpose();
    }
    if n > 1 {
        cov /= (n - 1) as f64;
    }
    (mean, cov)
}
