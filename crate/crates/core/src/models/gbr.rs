//! Gradient boosting with squared loss and shallow CART base learners.
//!
//! The model starts from the target mean and, at each stage, fits a
//! depth-limited tree to the current residuals (the negative gradient of
//! squared loss) and adds learning_rate times its prediction. Regularization
//! is structural only: the base trees' depth and leaf-size limits.

use nalgebra::{DMatrix, DVector};

use super::tree;
use super::{ModelParams, ModelSpec};

pub(crate) fn fit(x: &DMatrix<f64>, y: &DVector<f64>, spec: &ModelSpec) -> ModelParams {
    let n = x.nrows();
    let p = x.ncols();
    let n_stages = spec.param("n_stages") as usize;
    let learning_rate = spec.param("learning_rate");
    let cfg = spec.tree_config();

    let initial = y.sum() / n as f64;
    let mut residuals = y.add_scalar(-initial);
    let rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(n_stages);
    for _ in 0..n_stages {
        let stage = tree::grow(x, &residuals, rows.clone(), &cfg, &mut || (0..p).collect());
        for i in 0..n {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            residuals[i] -= learning_rate * stage.predict(&row);
        }
        trees.push(stage);
    }
    ModelParams::Gbr {
        initial,
        learning_rate,
        trees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_util::{names, random_xy};
    use crate::models::{fit as fit_model, ModelKind, ModelSpec};

    #[test]
    fn zero_stages_predicts_the_mean() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 3.0]);
        let spec = ModelSpec::new(ModelKind::Gbr).with("n_stages", 0.0).unwrap();
        let model = fit_model(&spec, &x, &y, &names(1)).unwrap();
        assert_eq!(model.predict(&[0.0]).unwrap(), 2.0);
        assert_eq!(model.predict(&[55.0]).unwrap(), 2.0);
    }

    #[test]
    fn one_full_tree_at_unit_rate_fits_exactly() {
        let (x, y) = random_xy(51, 30, 3);
        let spec = ModelSpec::new(ModelKind::Gbr)
            .with("n_stages", 1.0)
            .unwrap()
            .with("learning_rate", 1.0)
            .unwrap()
            .with("max_depth", f64::INFINITY)
            .unwrap();
        let model = fit_model(&spec, &x, &y, &names(3)).unwrap();
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let pred = model.predict(&row).unwrap();
            assert!((pred - y[i]).abs() < 1e-10, "row {i}: {pred} vs {}", y[i]);
        }
    }

    #[test]
    fn training_mse_is_monotone_in_stage_count() {
        let (x, y) = random_xy(52, 60, 4);
        let spec = ModelSpec::new(ModelKind::Gbr)
            .with("n_stages", 100.0)
            .unwrap();
        let model = fit_model(&spec, &x, &y, &names(4)).unwrap();
        let (initial, learning_rate, trees) = match &model.params {
            ModelParams::Gbr {
                initial,
                learning_rate,
                trees,
            } => (*initial, *learning_rate, trees),
            _ => unreachable!(),
        };
        let mut predictions = vec![initial; x.nrows()];
        let mut mse_prev = f64::INFINITY;
        for (m, stage) in std::iter::once(None)
            .chain(trees.iter().map(Some))
            .enumerate()
        {
            if let Some(stage) = stage {
                for (i, pred) in predictions.iter_mut().enumerate() {
                    let row: Vec<f64> = x.row(i).iter().copied().collect();
                    *pred += learning_rate * stage.predict(&row);
                }
            }
            let mse: f64 = predictions
                .iter()
                .zip(y.iter())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / x.nrows() as f64;
            assert!(
                mse <= mse_prev * (1.0 + 1e-12),
                "stage {m}: mse {mse} above previous {mse_prev}"
            );
            mse_prev = mse;
        }
    }

    #[test]
    fn default_base_trees_are_depth_limited() {
        let (x, y) = random_xy(53, 120, 3);
        let model = fit_model(&ModelSpec::new(ModelKind::Gbr), &x, &y, &names(3)).unwrap();
        let trees: &[tree::Tree] = match &model.params {
            ModelParams::Gbr { trees, .. } => trees,
            _ => unreachable!(),
        };
        assert_eq!(trees.len(), 100);
        for t in trees {
            assert!(t.depth() <= 3);
        }
    }
}
