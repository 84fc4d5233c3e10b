//! Leave-one-out cross-validation and results reporting.
//!
//! Every run is held out exactly once; the model refits on the remaining
//! runs and predicts the held-out target. Folds are independent and run in
//! parallel, but the report is assembled in run order so output is
//! order-deterministic. Scores are mean absolute error in nm.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMode, FeatureVector, Standardizer};
use crate::io_util;
use crate::models::{self, ModelKind, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub run_id: String,
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_kind: ModelKind,
    pub feature_mode: FeatureMode,
    pub standardized: bool,
    pub fold_predictions: Vec<FoldPrediction>,
    pub per_fold_abs_error: Vec<f64>,
    pub mae: f64,
    /// Feature names aligned with `importance_summary`.
    pub feature_names: Vec<String>,
    /// Mean over folds of the per-fold normalized importances; present only
    /// for the tree family.
    pub importance_summary: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::atomic_write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<EvalReport> {
        io_util::read_json(path)
    }
}

/// Mean absolute error between matched prediction/target vectors.
pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::MaeLengthMismatch {
            true_len: y_true.len(),
            pred_len: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::InvalidEvalInput(
            "mae needs at least one pair".to_string(),
        ));
    }
    let total: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).abs())
        .sum();
    Ok(total / y_true.len() as f64)
}

/// Leave-one-out cross-validation of one model spec over a feature table.
///
/// With `standardize` set, a z-scorer is fitted on each fold's training
/// rows only and applied to both sides, so no held-out information leaks
/// into the transform.
pub fn loocv(
    features: &[FeatureVector],
    spec: &ModelSpec,
    standardize: bool,
) -> Result<EvalReport> {
    spec.validate()?;
    if features.len() < 2 {
        return Err(Error::InvalidEvalInput(format!(
            "leave-one-out needs at least 2 runs, got {}",
            features.len()
        )));
    }
    let mode = features[0].mode;
    let names = &features[0].names;
    let mut seen = BTreeSet::new();
    for fv in features {
        if fv.mode != mode || &fv.names != names {
            return Err(Error::InvalidEvalInput(format!(
                "run {} mixes feature modes or layouts",
                fv.run_id
            )));
        }
        if !seen.insert(fv.run_id.as_str()) {
            return Err(Error::InvalidEvalInput(format!(
                "duplicate run_id {:?}",
                fv.run_id
            )));
        }
    }

    let n = features.len();
    let p = names.len();
    let folds: Vec<Result<(FoldPrediction, Option<Vec<f64>>)>> = (0..n)
        .into_par_iter()
        .map(|held_out| {
            let train: Vec<&FeatureVector> = features
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held_out)
                .map(|(_, fv)| fv)
                .collect();
            let scaler = standardize.then(|| {
                let rows: Vec<&[f64]> = train.iter().map(|fv| fv.values.as_slice()).collect();
                Standardizer::fit(&rows)
            });
            let transform = |fv: &FeatureVector| -> Vec<f64> {
                match &scaler {
                    Some(s) => s.apply(&fv.values),
                    None => fv.values.clone(),
                }
            };
            let train_rows: Vec<Vec<f64>> = train.iter().map(|fv| transform(fv)).collect();
            let x = DMatrix::from_fn(n - 1, p, |i, j| train_rows[i][j]);
            let y = DVector::from_fn(n - 1, |i, _| train[i].target);
            let model = models::fit(spec, &x, &y, names)?;
            let held = &features[held_out];
            let y_pred = model.predict(&transform(held))?;
            let importance = spec
                .kind
                .has_importance()
                .then(|| model.feature_importance())
                .transpose()?;
            Ok((
                FoldPrediction {
                    run_id: held.run_id.clone(),
                    y_true: held.target,
                    y_pred,
                },
                importance,
            ))
        })
        .collect();

    let mut fold_predictions = Vec::with_capacity(n);
    let mut importance_sum: Option<Vec<f64>> = None;
    for fold in folds {
        let (pred, importance) = fold?;
        fold_predictions.push(pred);
        if let Some(imp) = importance {
            match &mut importance_sum {
                Some(acc) => acc.iter_mut().zip(&imp).for_each(|(a, b)| *a += b),
                None => importance_sum = Some(imp),
            }
        }
    }
    let importance_summary = importance_sum.map(|mut acc| {
        for v in &mut acc {
            *v /= n as f64;
        }
        acc
    });
    let per_fold_abs_error: Vec<f64> = fold_predictions
        .iter()
        .map(|f| (f.y_true - f.y_pred).abs())
        .collect();
    let y_true: Vec<f64> = fold_predictions.iter().map(|f| f.y_true).collect();
    let y_pred: Vec<f64> = fold_predictions.iter().map(|f| f.y_pred).collect();
    let mae = mae(&y_true, &y_pred)?;

    Ok(EvalReport {
        model_kind: spec.kind,
        feature_mode: mode,
        standardized: standardize,
        fold_predictions,
        per_fold_abs_error,
        mae,
        feature_names: names.clone(),
        importance_summary,
    })
}

/// MAE per (model kind, feature mode) cell, with the best cell(s) flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    /// One row per model kind in table order; either cell may be absent.
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub kind: ModelKind,
    pub together: Option<f64>,
    pub separate: Option<f64>,
}

impl ResultsTable {
    /// Minimum MAE over all present cells.
    pub fn best_mae(&self) -> Option<f64> {
        self.rows
            .iter()
            .flat_map(|r| [r.together, r.separate])
            .flatten()
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            })
    }

    /// Cells tied at the minimum are all flagged.
    pub fn is_best(&self, kind: ModelKind, mode: FeatureMode) -> bool {
        let Some(best) = self.best_mae() else {
            return false;
        };
        self.cell(kind, mode) == Some(best)
    }

    pub fn cell(&self, kind: ModelKind, mode: FeatureMode) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.kind == kind)
            .and_then(|r| match mode {
                FeatureMode::Together => r.together,
                FeatureMode::Separate => r.separate,
            })
    }

    /// CSV rendering: method key plus one column per feature mode, floats
    /// with 17 significant digits, absent cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,together,separate\n");
        for row in &self.rows {
            let cell = |v: Option<f64>| v.map(io_util::format_f64).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{}\n",
                row.kind.key(),
                cell(row.together),
                cell(row.separate)
            ));
        }
        out
    }

    /// Aligned text rendering; the best cell(s) carry a `*` marker.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:>14} {:>14}\n",
            "Method", "Together", "Separate"
        ));
        for row in &self.rows {
            let cell = |mode: FeatureMode, v: Option<f64>| -> String {
                match v {
                    Some(mae) => {
                        let flag = if self.is_best(row.kind, mode) { "*" } else { "" };
                        format!("{flag}{mae:.4}")
                    }
                    None => "-".to_string(),
                }
            };
            out.push_str(&format!(
                "{:<20} {:>14} {:>14}\n",
                row.kind.display_name(),
                cell(FeatureMode::Together, row.together),
                cell(FeatureMode::Separate, row.separate)
            ));
        }
        out.push_str("(* = lowest MAE, nm)\n");
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        io_util::atomic_write(path, self.to_csv().as_bytes())
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        io_util::atomic_write(path, self.to_text().as_bytes())
    }
}

/// Assemble reports into a table keyed by (kind, mode).
pub fn results_table(reports: &[EvalReport]) -> Result<ResultsTable> {
    if reports.is_empty() {
        return Err(Error::InvalidEvalInput(
            "no reports to tabulate".to_string(),
        ));
    }
    let mut seen = BTreeSet::new();
    for r in reports {
        if !seen.insert((r.model_kind, r.feature_mode == FeatureMode::Separate)) {
            return Err(Error::InvalidEvalInput(format!(
                "duplicate report for ({}, {})",
                r.model_kind.key(),
                r.feature_mode
            )));
        }
    }
    let rows = ModelKind::TABLE_ORDER
        .iter()
        .filter(|kind| reports.iter().any(|r| r.model_kind == **kind))
        .map(|&kind| {
            let cell = |mode: FeatureMode| {
                reports
                    .iter()
                    .find(|r| r.model_kind == kind && r.feature_mode == mode)
                    .map(|r| r.mae)
            };
            TableRow {
                kind,
                together: cell(FeatureMode::Together),
                separate: cell(FeatureMode::Separate),
            }
        })
        .collect();
    Ok(ResultsTable { rows })
}
