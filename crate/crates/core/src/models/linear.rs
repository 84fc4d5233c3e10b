//! Ordinary least squares and ridge regression.
//!
//! OLS solves the intercept-augmented system; when that system is
//! rank-deficient (including p + 1 > n) the minimum-norm least-squares
//! solution is returned instead of an error, so the 52-feature / 23-sample
//! folds run to completion. Ridge is the closed form on centered data with
//! an unpenalized intercept.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::ModelParams;

/// Minimum-norm least-squares solution of `a x = b` via SVD, with singular
/// values below max_sv * max(n, p) * eps treated as zero.
fn min_norm_lstsq(a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let dim = a.nrows().max(a.ncols()) as f64;
    let svd = a.svd(true, true);
    let max_sv = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    let eps = max_sv * dim * f64::EPSILON;
    svd.solve(b, eps).expect("u and v_t were computed")
}

/// Least squares on [1 | X].
pub(crate) fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> ModelParams {
    let (n, p) = (x.nrows(), x.ncols());
    let mut augmented = DMatrix::from_element(n, p + 1, 1.0);
    augmented.view_mut((0, 1), (n, p)).copy_from(x);
    let beta = min_norm_lstsq(augmented, y);
    ModelParams::Linear {
        intercept: beta[0],
        coefficients: beta.as_slice()[1..].to_vec(),
    }
}

/// Ridge on centered data: (Xc^T Xc + lambda I) beta = Xc^T yc, intercept
/// mean(y) - beta . mean(x). At lambda = 0 the system can be singular and
/// the minimum-norm solution is used.
pub(crate) fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> ModelParams {
    let (n, p) = (x.nrows(), x.ncols());
    let col_means = DVector::from_fn(p, |j, _| x.column(j).sum() / n as f64);
    let y_mean = y.sum() / n as f64;
    let mut xc = x.clone();
    for j in 0..p {
        xc.column_mut(j).add_scalar_mut(-col_means[j]);
    }
    let yc = y.add_scalar(-y_mean);

    let beta = if lambda == 0.0 {
        min_norm_lstsq(xc, &yc)
    } else {
        let mut gram = xc.transpose() * &xc;
        for j in 0..p {
            gram[(j, j)] += lambda;
        }
        let rhs = xc.transpose() * yc;
        match Cholesky::new(gram) {
            Some(chol) => chol.solve(&rhs),
            // Positive lambda keeps the system definite; reachable only
            // through pathological rounding, where min-norm still applies.
            None => {
                let mut gram = xc.transpose() * &xc;
                for j in 0..p {
                    gram[(j, j)] += lambda;
                }
                min_norm_lstsq(gram, &rhs)
            }
        }
    };
    let intercept = y_mean - beta.dot(&col_means);
    ModelParams::Linear {
        intercept,
        coefficients: beta.as_slice().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_util::random_xy;
    use crate::models::{fit, ModelKind, ModelSpec};

    fn coefs(params: &ModelParams) -> (f64, Vec<f64>) {
        match params {
            ModelParams::Linear {
                intercept,
                coefficients,
            } => (*intercept, coefficients.clone()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn exact_line_recovered() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 3.0]);
        let (b0, b) = coefs(&fit_ols(&x, &y));
        assert!((b0 - 1.0).abs() < 1e-12);
        assert!((b[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target_full_rank_gives_zero_slope() {
        let (x, _) = random_xy(21, 30, 4);
        let y = DVector::from_element(30, 5.5);
        let (b0, b) = coefs(&fit_ols(&x, &y));
        assert!((b0 - 5.5).abs() < 1e-9, "{b0}");
        for v in b {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn normal_equation_residual_orthogonality() {
        let (x, y) = random_xy(22, 40, 6);
        let (b0, b) = coefs(&fit_ols(&x, &y));
        let n = x.nrows();
        let mut augmented = DMatrix::from_element(n, 7, 1.0);
        augmented.view_mut((0, 1), (n, 6)).copy_from(&x);
        let mut beta = vec![b0];
        beta.extend(b);
        let residual = &y - &augmented * DVector::from_vec(beta);
        let grad = augmented.transpose() * residual;
        assert!(grad.amax() < 1e-8, "max gradient {}", grad.amax());
    }

    #[test]
    fn overdetermined_by_features_interpolates() {
        // p = 52 > n = 23: the augmented system is rank-deficient, the
        // min-norm rule must still fit the training targets exactly.
        let (x, y) = random_xy(23, 23, 52);
        let (b0, b) = coefs(&fit_ols(&x, &y));
        for i in 0..x.nrows() {
            let pred = b0
                + x.row(i)
                    .iter()
                    .zip(b.iter())
                    .map(|(xi, bi)| xi * bi)
                    .sum::<f64>();
            assert!((pred - y[i]).abs() < 1e-8, "row {i}: {pred} vs {}", y[i]);
        }
    }

    #[test]
    fn ridge_at_zero_matches_ols_on_full_rank_data() {
        let (x, y) = random_xy(24, 30, 5);
        let (b0_ols, b_ols) = coefs(&fit_ols(&x, &y));
        let (b0_ridge, b_ridge) = coefs(&fit_ridge(&x, &y, 0.0));
        assert!((b0_ols - b0_ridge).abs() < 1e-8);
        for (a, b) in b_ols.iter().zip(&b_ridge) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn huge_lambda_shrinks_to_target_mean() {
        let (x, y) = random_xy(25, 25, 4);
        let y_mean = y.sum() / y.len() as f64;
        let model = fit(
            &ModelSpec::new(ModelKind::Ridge).with("lambda", 1e12).unwrap(),
            &x,
            &y,
            &crate::models::test_util::names(4),
        )
        .unwrap();
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let pred = model.predict(&row).unwrap();
            assert!(
                (pred - y_mean).abs() <= 1e-4 * y_mean.abs().max(1.0),
                "{pred} vs {y_mean}"
            );
        }
    }

    #[test]
    fn coefficient_norm_shrinks_with_lambda() {
        let (x, y) = random_xy(26, 30, 8);
        let mut previous = f64::INFINITY;
        for lambda in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let (_, b) = coefs(&fit_ridge(&x, &y, lambda));
            let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                norm <= previous * (1.0 + 1e-12),
                "norm {norm} grew at lambda {lambda}"
            );
            previous = norm;
        }
    }
}
