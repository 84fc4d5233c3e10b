//! Gaussian process regression with a squared-exponential kernel and zero
//! prior mean.
//!
//! The Gram matrix K_ij = k(x_i, x_j) + jitter * delta_ij is factored by
//! Cholesky; the stored alpha = K^-1 y makes the posterior mean at a query
//! point the dot product of the cross-kernel vector with alpha. Jitter is
//! purely numerical: it keeps the factorization positive-definite.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::ModelParams;
use crate::error::{Error, Result};

/// Squared-exponential kernel exp(-||a - b||^2 / (2 length_scale^2));
/// equals 1 at zero distance.
pub fn rbf_kernel(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * length_scale * length_scale)).exp()
}

pub(crate) fn fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    length_scale: f64,
    jitter: f64,
) -> Result<ModelParams> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = rbf_kernel(&rows[i], &rows[j], length_scale);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
        gram[(i, i)] += jitter;
    }
    let chol = Cholesky::new(gram).ok_or(Error::GpFactorization)?;
    let alpha = chol.solve(y);
    Ok(ModelParams::Gp {
        train_inputs: rows,
        alpha: alpha.as_slice().to_vec(),
        length_scale,
    })
}

/// Posterior mean at a query point: k_*^T alpha. Far from every training
/// input the kernel decays and the prediction returns to the zero prior
/// mean.
pub(crate) fn predict(
    train_inputs: &[Vec<f64>],
    alpha: &[f64],
    length_scale: f64,
    query: &[f64],
) -> f64 {
    train_inputs
        .iter()
        .zip(alpha)
        .map(|(xi, &a)| rbf_kernel(query, xi, length_scale) * a)
        .sum()
}
