//! Random forest: bagged CART trees with per-split feature subsampling.
//!
//! Each member tree draws a size-n bootstrap sample and, at every split,
//! ceil(feature_fraction * p) candidate features. Member seeds are derived
//! deterministically from (spec.seed, member index), so trees may train in
//! parallel and still reproduce bit-identically. Prediction is the plain
//! mean of member predictions in member order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{self, Tree};
use super::{ModelParams, ModelSpec};
use crate::seed;

const MEMBER_STREAM: u64 = 0x464F_5245_5354; // "FOREST"

pub(crate) fn fit(x: &DMatrix<f64>, y: &DVector<f64>, spec: &ModelSpec) -> ModelParams {
    let n = x.nrows();
    let p = x.ncols();
    let n_trees = spec.param("n_trees") as usize;
    let bootstrap = spec.param("bootstrap") == 1.0;
    let feature_fraction = spec.param("feature_fraction");
    let m_try = ((feature_fraction * p as f64).ceil() as usize).clamp(1, p);
    let cfg = spec.tree_config();

    let trees: Vec<Tree> = (0..n_trees)
        .into_par_iter()
        .map(|member| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, &[MEMBER_STREAM, member as u64]));
            // Draw order is fixed: bootstrap rows first, then feature
            // subsets in split order inside grow().
            let rows: Vec<usize> = if bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut pick = move || -> Vec<usize> {
                if m_try == p {
                    (0..p).collect()
                } else {
                    let mut chosen: Vec<usize> =
                        rand::seq::index::sample(&mut rng, p, m_try).into_vec();
                    chosen.sort_unstable();
                    chosen
                }
            };
            tree::grow(x, y, rows, &cfg, &mut pick)
        })
        .collect();

    ModelParams::Forest { trees }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_util::{names, random_xy};
    use crate::models::{fit as fit_model, ModelKind, ModelSpec, TrainedModel};

    fn member_trees(model: &TrainedModel) -> &[Tree] {
        match &model.params {
            ModelParams::Forest { trees } => trees,
            _ => unreachable!(),
        }
    }

    #[test]
    fn degenerate_forest_equals_plain_tree() {
        let (x, y) = random_xy(41, 30, 4);
        let forest_spec = ModelSpec::new(ModelKind::Forest)
            .with("n_trees", 1.0)
            .unwrap()
            .with("bootstrap", 0.0)
            .unwrap();
        let forest = fit_model(&forest_spec, &x, &y, &names(4)).unwrap();
        let tree = fit_model(&ModelSpec::new(ModelKind::Tree), &x, &y, &names(4)).unwrap();
        let (probe, _) = random_xy(99, 50, 4);
        for i in 0..probe.nrows() {
            let row: Vec<f64> = probe.row(i).iter().copied().collect();
            assert_eq!(
                forest.predict(&row).unwrap(),
                tree.predict(&row).unwrap(),
                "row {i}"
            );
        }
    }

    #[test]
    fn same_seed_is_bit_identical_and_different_seed_is_not() {
        let (x, y) = random_xy(42, 25, 5);
        let spec = ModelSpec::new(ModelKind::Forest)
            .with("n_trees", 20.0)
            .unwrap()
            .with_seed(4242);
        let a = fit_model(&spec, &x, &y, &names(5)).unwrap();
        let b = fit_model(&spec, &x, &y, &names(5)).unwrap();
        assert_eq!(a, b);

        let c = fit_model(&spec.clone().with_seed(4243), &x, &y, &names(5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prediction_is_exact_mean_of_member_trees() {
        let (x, y) = random_xy(43, 20, 3);
        let spec = ModelSpec::new(ModelKind::Forest)
            .with("n_trees", 13.0)
            .unwrap()
            .with("feature_fraction", 0.5)
            .unwrap()
            .with_seed(7);
        let model = fit_model(&spec, &x, &y, &names(3)).unwrap();
        let (probe, _) = random_xy(98, 40, 3);
        for i in 0..probe.nrows() {
            let row: Vec<f64> = probe.row(i).iter().copied().collect();
            // Same summation order as predict: member order, then divide.
            let sum: f64 = member_trees(&model).iter().map(|t| t.predict(&row)).sum();
            let mean = sum / member_trees(&model).len() as f64;
            assert_eq!(model.predict(&row).unwrap().to_bits(), mean.to_bits());
        }
    }
}
