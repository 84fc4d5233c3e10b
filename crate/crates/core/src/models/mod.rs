//! Seven regression models behind one fit/predict contract.
//!
//! Every model is fit from an n x p feature matrix and an n-vector of
//! targets; prediction is deterministic given the trained parameters, and
//! only the tree family (tree, forest, gradient boosting) defines feature
//! importance. Hyperparameters travel as a validated name/value map so the
//! command line and persisted documents share one representation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::io_util;

pub mod forest;
pub mod gbr;
pub mod gp;
pub mod linear;
pub mod svr;
pub mod tree;

pub use tree::{Tree, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Ridge,
    Gp,
    Tree,
    Forest,
    Svr,
    Gbr,
}

impl ModelKind {
    /// All kinds, in the order results tables are printed.
    pub const TABLE_ORDER: [ModelKind; 7] = [
        ModelKind::Linear,
        ModelKind::Gp,
        ModelKind::Tree,
        ModelKind::Ridge,
        ModelKind::Forest,
        ModelKind::Svr,
        ModelKind::Gbr,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Ridge => "ridge",
            ModelKind::Gp => "gp",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Svr => "svr",
            ModelKind::Gbr => "gbr",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "Linear Regression",
            ModelKind::Ridge => "Ridge Regression",
            ModelKind::Gp => "Gaussian Process",
            ModelKind::Tree => "Decision Tree",
            ModelKind::Forest => "Random Forest",
            ModelKind::Svr => "Support Vector",
            ModelKind::Gbr => "Gradient Boosting",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        ModelKind::TABLE_ORDER
            .iter()
            .copied()
            .find(|k| k.key() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = ModelKind::TABLE_ORDER.iter().map(|k| k.key()).collect();
                Error::InvalidModelSpec(format!(
                    "unknown model kind {s:?}; valid kinds: {}",
                    valid.join(", ")
                ))
            })
    }

    pub fn has_importance(&self) -> bool {
        matches!(self, ModelKind::Tree | ModelKind::Forest | ModelKind::Gbr)
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        match self {
            ModelKind::Linear => &[],
            ModelKind::Ridge => &[("lambda", 1.0)],
            ModelKind::Gp => &[("length_scale", 1.0), ("jitter", 1e-10)],
            ModelKind::Tree => &[("min_samples_leaf", 1.0), ("max_depth", f64::INFINITY)],
            ModelKind::Forest => &[
                ("n_trees", 100.0),
                ("feature_fraction", 1.0),
                ("bootstrap", 1.0),
                ("min_samples_leaf", 1.0),
                ("max_depth", f64::INFINITY),
            ],
            ModelKind::Svr => &[("c", 1.0), ("epsilon", 0.1)],
            ModelKind::Gbr => &[
                ("n_stages", 100.0),
                ("learning_rate", 0.1),
                ("max_depth", 3.0),
                ("min_samples_leaf", 1.0),
            ],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// A model kind plus its hyperparameters and the seed that drives any
/// randomized part (the forest's bootstrap and feature subsampling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// An unlimited tree depth is the value `f64::INFINITY`, written as the
    /// string "infinity" in JSON (which has no infinity literal).
    #[serde(with = "hyper_serde")]
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
}

mod hyper_serde {
    use std::collections::BTreeMap;

    use serde::ser::SerializeMap;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<String, f64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(map.len()))?;
        for (k, v) in map {
            if v.is_infinite() && *v > 0.0 {
                m.serialize_entry(k, "infinity")?;
            } else {
                m.serialize_entry(k, v)?;
            }
        }
        m.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<String, f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum NumOrString {
            Num(f64),
            Str(String),
        }
        let raw: BTreeMap<String, NumOrString> = BTreeMap::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| match v {
                NumOrString::Num(x) => Ok((k, x)),
                NumOrString::Str(s) if s == "infinity" => Ok((k, f64::INFINITY)),
                NumOrString::Str(s) => Err(serde::de::Error::custom(format!(
                    "invalid hyperparameter value {s:?} for {k:?}"
                ))),
            })
            .collect()
    }
}

impl ModelSpec {
    /// Spec with the default hyperparameters for `kind`.
    pub fn new(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            params: kind
                .defaults()
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            seed: 0,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Result<ModelSpec> {
        if !self.params.contains_key(name) {
            let valid: Vec<&str> = self.kind.defaults().iter().map(|(k, _)| *k).collect();
            return Err(Error::InvalidModelSpec(format!(
                "{} has no hyperparameter {name:?}; valid names: {}",
                self.kind.key(),
                if valid.is_empty() {
                    "(none)".to_string()
                } else {
                    valid.join(", ")
                }
            )));
        }
        self.params.insert(name.to_string(), value);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> ModelSpec {
        self.seed = seed;
        self
    }

    pub(crate) fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn validate(&self) -> Result<()> {
        let known: Vec<&str> = self.kind.defaults().iter().map(|(k, _)| *k).collect();
        for key in self.params.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::InvalidModelSpec(format!(
                    "{} has no hyperparameter {key:?}",
                    self.kind.key()
                )));
            }
        }
        for &name in &known {
            if !self.params.contains_key(name) {
                return Err(Error::InvalidModelSpec(format!(
                    "{} is missing hyperparameter {name:?}",
                    self.kind.key()
                )));
            }
        }
        let check = |cond: bool, msg: String| -> Result<()> {
            if cond {
                Ok(())
            } else {
                Err(Error::InvalidModelSpec(msg))
            }
        };
        let int_at_least = |name: &str, min: f64| -> Result<()> {
            let v = self.param(name);
            check(
                v.is_finite() && v >= min && v.fract() == 0.0,
                format!("{name} must be an integer >= {min}, got {v}"),
            )
        };
        match self.kind {
            ModelKind::Linear => {}
            ModelKind::Ridge => {
                let l = self.param("lambda");
                check(
                    l.is_finite() && l >= 0.0,
                    format!("lambda must be >= 0, got {l}"),
                )?;
            }
            ModelKind::Gp => {
                let ls = self.param("length_scale");
                check(
                    ls.is_finite() && ls > 0.0,
                    format!("length_scale must be > 0, got {ls}"),
                )?;
                let j = self.param("jitter");
                check(
                    j.is_finite() && j > 0.0,
                    format!("jitter must be > 0, got {j}"),
                )?;
            }
            ModelKind::Tree => {
                int_at_least("min_samples_leaf", 1.0)?;
                self.check_max_depth()?;
            }
            ModelKind::Forest => {
                int_at_least("n_trees", 1.0)?;
                int_at_least("min_samples_leaf", 1.0)?;
                self.check_max_depth()?;
                let ff = self.param("feature_fraction");
                check(
                    ff.is_finite() && ff > 0.0 && ff <= 1.0,
                    format!("feature_fraction must lie in (0, 1], got {ff}"),
                )?;
                let b = self.param("bootstrap");
                check(
                    b == 0.0 || b == 1.0,
                    format!("bootstrap must be 0 or 1, got {b}"),
                )?;
            }
            ModelKind::Svr => {
                let c = self.param("c");
                check(c.is_finite() && c > 0.0, format!("c must be > 0, got {c}"))?;
                let e = self.param("epsilon");
                check(
                    e.is_finite() && e >= 0.0,
                    format!("epsilon must be >= 0, got {e}"),
                )?;
            }
            ModelKind::Gbr => {
                int_at_least("n_stages", 0.0)?;
                int_at_least("min_samples_leaf", 1.0)?;
                self.check_max_depth()?;
                let lr = self.param("learning_rate");
                check(
                    lr.is_finite() && lr > 0.0 && lr <= 1.0,
                    format!("learning_rate must lie in (0, 1], got {lr}"),
                )?;
            }
        }
        Ok(())
    }

    fn check_max_depth(&self) -> Result<()> {
        let d = self.param("max_depth");
        if (d.is_infinite() && d > 0.0) || (d.is_finite() && d >= 0.0 && d.fract() == 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidModelSpec(format!(
                "max_depth must be a non-negative integer or infinity, got {d}"
            )))
        }
    }

    pub(crate) fn tree_config(&self) -> TreeConfig {
        let d = self.param("max_depth");
        TreeConfig {
            min_samples_leaf: self.param("min_samples_leaf") as usize,
            max_depth: if d.is_infinite() { None } else { Some(d as usize) },
        }
    }
}

/// Kind-specific fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelParams {
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
    },
    Gp {
        train_inputs: Vec<Vec<f64>>,
        alpha: Vec<f64>,
        length_scale: f64,
    },
    Tree {
        tree: Tree,
    },
    Forest {
        trees: Vec<Tree>,
    },
    Svr {
        weights: Vec<f64>,
        bias: f64,
    },
    Gbr {
        initial: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
    },
}

/// A fitted regressor. Prediction is deterministic given the parameters;
/// persistence round-trips reproduce predictions bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub params: ModelParams,
}

/// Fit a model of the requested kind.
pub fn fit(
    spec: &ModelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    feature_names: &[String],
) -> Result<TrainedModel> {
    spec.validate()?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidModelSpec(format!(
            "training matrix must be non-empty, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if y.len() != x.nrows() {
        return Err(Error::InvalidModelSpec(format!(
            "{} rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if feature_names.len() != x.ncols() {
        return Err(Error::InvalidModelSpec(format!(
            "{} columns but {} feature names",
            x.ncols(),
            feature_names.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModelSpec(
            "training data contains a non-finite value".to_string(),
        ));
    }

    let params = match spec.kind {
        ModelKind::Linear => linear::fit_ols(x, y),
        ModelKind::Ridge => linear::fit_ridge(x, y, spec.param("lambda")),
        ModelKind::Gp => gp::fit(x, y, spec.param("length_scale"), spec.param("jitter"))?,
        ModelKind::Tree => ModelParams::Tree {
            tree: tree::fit(x, y, &spec.tree_config()),
        },
        ModelKind::Forest => forest::fit(x, y, spec),
        ModelKind::Svr => svr::fit(x, y, spec.param("c"), spec.param("epsilon"))?,
        ModelKind::Gbr => gbr::fit(x, y, spec),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        feature_names: feature_names.to_vec(),
        params,
    })
}

impl TrainedModel {
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                actual: features.len(),
            });
        }
        Ok(match &self.params {
            ModelParams::Linear {
                intercept,
                coefficients,
            } => intercept + dot(coefficients, features),
            ModelParams::Gp {
                train_inputs,
                alpha,
                length_scale,
            } => gp::predict(train_inputs, alpha, *length_scale, features),
            ModelParams::Tree { tree } => tree.predict(features),
            ModelParams::Forest { trees } => {
                let sum: f64 = trees.iter().map(|t| t.predict(features)).sum();
                sum / trees.len() as f64
            }
            ModelParams::Svr { weights, bias } => bias + dot(weights, features),
            ModelParams::Gbr {
                initial,
                learning_rate,
                trees,
            } => {
                let mut acc = *initial;
                for t in trees {
                    acc += learning_rate * t.predict(features);
                }
                acc
            }
        })
    }

    /// Normalized total variance reduction per feature. Defined only for
    /// the tree family; a split-free model scores all zeros.
    pub fn feature_importance(&self) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.feature_names.len()];
        match &self.params {
            ModelParams::Tree { tree } => tree.accumulate_importance(&mut acc),
            ModelParams::Forest { trees } | ModelParams::Gbr { trees, .. } => {
                for t in trees {
                    t.accumulate_importance(&mut acc);
                }
            }
            _ => {
                return Err(Error::ImportanceUnsupported(
                    self.spec.kind.key().to_string(),
                ))
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            for v in &mut acc {
                *v /= total;
            }
        }
        Ok(acc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::atomic_write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        io_util::read_json(path).map_err(|e| Error::ModelFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }
}

/// A persisted model plus the standardizer fitted alongside it (when the
/// pipeline ran with z-scoring), so prediction inputs receive the same
/// transform the training features did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub model: TrainedModel,
    pub standardizer: Option<Standardizer>,
}

/// Fit a model on a whole feature table, optionally z-scoring first; the
/// fitted scaler travels with the model so later prediction inputs receive
/// the same transform.
pub fn fit_table(
    spec: &ModelSpec,
    features: &[crate::features::FeatureVector],
    standardize: bool,
) -> Result<ModelDocument> {
    if features.is_empty() {
        return Err(Error::InvalidModelSpec(
            "cannot fit on an empty feature table".to_string(),
        ));
    }
    let names = features[0].names.clone();
    let standardizer = standardize.then(|| {
        let rows: Vec<&[f64]> = features.iter().map(|fv| fv.values.as_slice()).collect();
        Standardizer::fit(&rows)
    });
    let transformed: Vec<Vec<f64>> = features
        .iter()
        .map(|fv| match &standardizer {
            Some(s) => s.apply(&fv.values),
            None => fv.values.clone(),
        })
        .collect();
    let x = DMatrix::from_fn(features.len(), names.len(), |i, j| transformed[i][j]);
    let y = DVector::from_fn(features.len(), |i, _| features[i].target);
    let model = fit(spec, &x, &y, &names)?;
    Ok(ModelDocument {
        model,
        standardizer,
    })
}

impl ModelDocument {
    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::atomic_write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<ModelDocument> {
        io_util::read_json(path).map_err(|e| Error::ModelFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        match &self.standardizer {
            Some(s) => self.model.predict(&s.apply(features)),
            None => self.model.predict(features),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
pub(crate) mod test_util {
    use nalgebra::{DMatrix, DVector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub fn random_xy(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-5.0..5.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        (x, y)
    }

    pub fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("f{j}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use test_util::{names, random_xy};

    #[test]
    fn parse_and_keys_round_trip() {
        for kind in ModelKind::TABLE_ORDER {
            assert_eq!(ModelKind::parse(kind.key()).unwrap(), kind);
        }
        let err = ModelKind::parse("boosted_ferns").unwrap_err();
        assert!(err.to_string().contains("valid kinds"), "{err}");
    }

    #[test]
    fn spec_validation_catches_bad_ranges() {
        assert!(ModelSpec::new(ModelKind::Ridge)
            .with("lambda", -1.0)
            .unwrap()
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelKind::Gp)
            .with("length_scale", 0.0)
            .unwrap()
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelKind::Svr)
            .with("c", 0.0)
            .unwrap()
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelKind::Gbr)
            .with("learning_rate", 1.5)
            .unwrap()
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelKind::Forest)
            .with("n_trees", 2.5)
            .unwrap()
            .validate()
            .is_err());
        assert!(ModelSpec::new(ModelKind::Tree).with("gamma", 1.0).is_err());
        assert!(ModelSpec::new(ModelKind::Tree).validate().is_ok());
    }

    #[test]
    fn prediction_checks_dimension() {
        let (x, y) = random_xy(1, 10, 3);
        let model = fit(&ModelSpec::new(ModelKind::Tree), &x, &y, &names(3)).unwrap();
        let err = model.predict(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                actual: 2
            }
        ));
    }

    #[test]
    fn importance_unsupported_for_non_tree_kinds() {
        let (x, y) = random_xy(2, 8, 2);
        for kind in [
            ModelKind::Linear,
            ModelKind::Ridge,
            ModelKind::Gp,
            ModelKind::Svr,
        ] {
            let model = fit(&ModelSpec::new(kind), &x, &y, &names(2)).unwrap();
            assert!(model.feature_importance().is_err(), "{kind:?}");
        }
    }

    #[test]
    fn persistence_reproduces_predictions_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = random_xy(3, 20, 4);
        for kind in ModelKind::TABLE_ORDER {
            let spec = ModelSpec::new(kind).with_seed(7);
            let model = fit(&spec, &x, &y, &names(4)).unwrap();
            let path = dir.path().join(format!("{}.json", kind.key()));
            model.save(&path).unwrap();
            let loaded = TrainedModel::load(&path).unwrap();
            assert_eq!(model, loaded, "{kind:?}");
            let (probe_x, _) = random_xy(99, 100, 4);
            for i in 0..probe_x.nrows() {
                let row: Vec<f64> = probe_x.row(i).iter().copied().collect();
                let a = model.predict(&row).unwrap();
                let b = loaded.predict(&row).unwrap();
                assert_eq!(a.to_bits(), b.to_bits(), "{kind:?} row {i}");
            }
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let (x, y) = random_xy(4, 16, 5);
        for kind in ModelKind::TABLE_ORDER {
            let spec = ModelSpec::new(kind).with_seed(11);
            let a = fit(&spec, &x, &y, &names(5)).unwrap();
            let b = fit(&spec, &x, &y, &names(5)).unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }
}
