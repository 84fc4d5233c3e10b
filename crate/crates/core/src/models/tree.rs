//! CART regression tree grown by exact greedy search.
//!
//! Each internal node picks the (feature, threshold) pair minimizing the
//! summed squared error of the two children; candidate thresholds are
//! midpoints between consecutive distinct sorted feature values. Ties are
//! broken toward the lowest feature index, then the lowest threshold, so
//! growth is deterministic without a seed. Leaves predict the mean target.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub min_samples_leaf: usize,
    /// `None` means unlimited depth.
    pub max_depth: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            min_samples_leaf: 1,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// n*var(node) - n_L*var(L) - n_R*var(R): the squared-error reduction
    /// this split achieves, used for feature importance.
    pub sse_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Mean target over the node's training samples.
    pub value: f64,
    pub samples: usize,
    pub split: Option<Split>,
}

/// Node arena; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, features: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i].split {
                Some(s) => {
                    i = if features[s.feature] <= s.threshold {
                        s.left
                    } else {
                        s.right
                    };
                }
                None => return self.nodes[i].value,
            }
        }
    }

    /// Add each split's squared-error reduction to `acc[feature]`.
    pub fn accumulate_importance(&self, acc: &mut [f64]) {
        for node in &self.nodes {
            if let Some(s) = &node.split {
                acc[s.feature] += s.sse_reduction;
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_some()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i].split {
                Some(s) => 1 + walk(nodes, s.left).max(walk(nodes, s.right)),
                None => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Fit on all rows with all features as split candidates.
pub fn fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &TreeConfig) -> Tree {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let p = x.ncols();
    grow(x, y, rows, cfg, &mut || (0..p).collect())
}

/// Grow a tree over the given training rows (repeats allowed, as in a
/// bootstrap sample). `pick` supplies the candidate feature set for each
/// split decision and must return ascending indices.
pub(crate) fn grow(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rows: Vec<usize>,
    cfg: &TreeConfig,
    pick: &mut dyn FnMut() -> Vec<usize>,
) -> Tree {
    assert!(!rows.is_empty(), "cannot grow a tree on zero samples");
    let mut tree = Tree { nodes: Vec::new() };
    build(x, y, rows, cfg, pick, 0, &mut tree);
    tree
}

struct BestSplit {
    cost: f64,
    feature: usize,
    threshold: f64,
}

fn build(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rows: Vec<usize>,
    cfg: &TreeConfig,
    pick: &mut dyn FnMut() -> Vec<usize>,
    depth: usize,
    tree: &mut Tree,
) -> usize {
    let n = rows.len();
    let sum: f64 = rows.iter().map(|&r| y[r]).sum();
    let sumsq: f64 = rows.iter().map(|&r| y[r] * y[r]).sum();
    let mean = sum / n as f64;
    let node_sse = (sumsq - sum * sum / n as f64).max(0.0);

    let index = tree.nodes.len();
    tree.nodes.push(Node {
        value: mean,
        samples: n,
        split: None,
    });

    let depth_allows = cfg.max_depth.map_or(true, |d| depth < d);
    let pure = {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in &rows {
            lo = lo.min(y[r]);
            hi = hi.max(y[r]);
        }
        lo == hi
    };
    if !depth_allows || pure || n < 2 * cfg.min_samples_leaf {
        return index;
    }

    let best = find_best_split(x, y, &rows, cfg.min_samples_leaf, &pick());
    let best = match best {
        Some(b) if b.cost < node_sse => b,
        _ => return index,
    };

    let (mut left_rows, mut right_rows) = (Vec::new(), Vec::new());
    for &r in &rows {
        if x[(r, best.feature)] <= best.threshold {
            left_rows.push(r);
        } else {
            right_rows.push(r);
        }
    }
    drop(rows);
    let left = build(x, y, left_rows, cfg, pick, depth + 1, tree);
    let right = build(x, y, right_rows, cfg, pick, depth + 1, tree);
    tree.nodes[index].split = Some(Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
        sse_reduction: node_sse - best.cost,
    });
    index
}

fn find_best_split(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    rows: &[usize],
    min_samples_leaf: usize,
    features: &[usize],
) -> Option<BestSplit> {
    let n = rows.len();
    let mut best: Option<BestSplit> = None;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut prefix_sum = vec![0.0; n + 1];
    let mut prefix_sumsq = vec![0.0; n + 1];

    for &feature in features {
        order.clear();
        order.extend_from_slice(rows);
        order.sort_by(|&a, &b| x[(a, feature)].partial_cmp(&x[(b, feature)]).unwrap());

        for (i, &r) in order.iter().enumerate() {
            prefix_sum[i + 1] = prefix_sum[i] + y[r];
            prefix_sumsq[i + 1] = prefix_sumsq[i] + y[r] * y[r];
        }

        for pos in 1..n {
            let lo = x[(order[pos - 1], feature)];
            let hi = x[(order[pos], feature)];
            if !(hi > lo) {
                continue;
            }
            if pos < min_samples_leaf || n - pos < min_samples_leaf {
                continue;
            }
            // Midpoint, nudged down when rounding lands it on the upper
            // value so the threshold always separates the two groups.
            let mut threshold = 0.5 * (lo + hi);
            if !(threshold < hi) {
                threshold = lo;
            }
            let (nl, nr) = (pos as f64, (n - pos) as f64);
            let sse_left = (prefix_sumsq[pos] - prefix_sum[pos] * prefix_sum[pos] / nl).max(0.0);
            let sum_right = prefix_sum[n] - prefix_sum[pos];
            let sse_right =
                ((prefix_sumsq[n] - prefix_sumsq[pos]) - sum_right * sum_right / nr).max(0.0);
            let cost = sse_left + sse_right;
            if best.as_ref().map_or(true, |b| cost < b.cost) {
                best = Some(BestSplit {
                    cost,
                    feature,
                    threshold,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_util::random_xy;
    use nalgebra::{DMatrix, DVector};

    fn matrix(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            rows.len(),
            rows[0].len(),
            &rows.iter().flat_map(|r| r.iter().copied()).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn single_sample_predicts_its_target_everywhere() {
        let x = matrix(&[&[4.2]]);
        let y = DVector::from_vec(vec![7.0]);
        let tree = fit(&x, &y, &TreeConfig::default());
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict(&[-100.0]), 7.0);
        assert_eq!(tree.predict(&[100.0]), 7.0);
    }

    #[test]
    fn two_points_split_at_midpoint() {
        let x = matrix(&[&[0.0], &[1.0]]);
        let y = DVector::from_vec(vec![1.0, 3.0]);
        let tree = fit(&x, &y, &TreeConfig::default());
        let split = tree.nodes[0].split.as_ref().unwrap();
        assert_eq!(split.threshold, 0.5);
        assert_eq!(tree.predict(&[0.2]), 1.0);
        assert_eq!(tree.predict(&[0.9]), 3.0);
    }

    #[test]
    fn constant_target_gives_depth_zero_tree() {
        let (x, _) = random_xy(5, 12, 3);
        let y = DVector::from_element(12, 2.75);
        let tree = fit(&x, &y, &TreeConfig::default());
        assert_eq!(tree.depth(), 0);
        assert_eq!(tree.predict(&[0.0, 0.0, 0.0]), 2.75);
    }

    #[test]
    fn unlimited_tree_reaches_zero_training_error() {
        let (x, y) = random_xy(6, 40, 4);
        let tree = fit(&x, &y, &TreeConfig::default());
        for i in 0..x.nrows() {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            assert_eq!(tree.predict(&row), y[i], "row {i}");
        }
    }

    #[test]
    fn max_depth_limits_growth() {
        let (x, y) = random_xy(7, 200, 3);
        for d in [0, 1, 2, 3] {
            let tree = fit(
                &x,
                &y,
                &TreeConfig {
                    min_samples_leaf: 1,
                    max_depth: Some(d),
                },
            );
            assert!(tree.depth() <= d, "depth {} exceeds {d}", tree.depth());
        }
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let (x, y) = random_xy(8, 50, 2);
        let tree = fit(
            &x,
            &y,
            &TreeConfig {
                min_samples_leaf: 7,
                max_depth: None,
            },
        );
        for node in &tree.nodes {
            if node.split.is_none() {
                assert!(node.samples >= 7, "leaf with {} samples", node.samples);
            }
        }
    }

    #[test]
    fn importance_concentrates_on_the_split_feature() {
        // Target depends on feature 3 only.
        let (x, _) = random_xy(9, 60, 5);
        let y = DVector::from_fn(60, |i, _| if x[(i, 3)] > 0.0 { 10.0 } else { -10.0 });
        let tree = fit(&x, &y, &TreeConfig::default());
        let mut acc = vec![0.0; 5];
        tree.accumulate_importance(&mut acc);
        let total: f64 = acc.iter().sum();
        assert!(acc[3] / total > 0.99, "importance {acc:?}");
    }

    #[test]
    fn depth_zero_tree_has_no_importance() {
        let x = matrix(&[&[1.0], &[2.0]]);
        let y = DVector::from_vec(vec![5.0, 5.0]);
        let tree = fit(&x, &y, &TreeConfig::default());
        let mut acc = vec![0.0; 1];
        tree.accumulate_importance(&mut acc);
        assert_eq!(acc, vec![0.0]);
    }

    #[test]
    fn ties_prefer_lowest_feature_and_threshold() {
        // Duplicated feature columns: any split on feature 1 matches the
        // gain of the same split on feature 0, so feature 0 must win.
        let x = matrix(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]);
        let y = DVector::from_vec(vec![0.0, 0.0, 10.0, 10.0]);
        let tree = fit(&x, &y, &TreeConfig::default());
        let split = tree.nodes[0].split.as_ref().unwrap();
        assert_eq!(split.feature, 0);
        assert_eq!(split.threshold, 1.5);
    }

    #[test]
    fn duplicate_rows_cannot_be_separated() {
        let x = matrix(&[&[1.0], &[1.0]]);
        let y = DVector::from_vec(vec![0.0, 4.0]);
        let tree = fit(&x, &y, &TreeConfig::default());
        assert_eq!(tree.depth(), 0);
        assert_eq!(tree.predict(&[1.0]), 2.0);
    }
}
