//! Per-run statistical quantifiers of band-energy series.
//!
//! A run's T x 13 band-energy matrix is reduced to either four pooled
//! quantifiers (mean, variance, skewness, kurtosis over every entry) or
//! fifty-two per-band quantifiers (the same four per band column). All
//! moments are population (1/n) moments; kurtosis is the raw fourth-moment
//! ratio, not excess.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;
use crate::spectral::BandEnergies;

pub const QUANTIFIER_NAMES: [&str; 4] = ["mean", "variance", "skewness", "kurtosis"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl Moments {
    fn as_array(&self) -> [f64; 4] {
        [self.mean, self.variance, self.skewness, self.kurtosis]
    }
}

/// Population moments of a non-empty sequence.
///
/// Mean and variance use 1/n. Skewness is m3 / m2^(3/2) and kurtosis is
/// m4 / m2^2 (raw, no -3). For zero-variance input the ratios are 0/0;
/// both are defined as 0 with variance exactly 0 as the trigger.
pub fn moments(xs: &[f64]) -> Moments {
    assert!(!xs.is_empty(), "moments of an empty sequence");
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skewness, kurtosis) = if m2 == 0.0 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };
    Moments {
        mean,
        variance: m2,
        skewness,
        kurtosis,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// One set of quantifiers over all band energies pooled.
    Together,
    /// Four quantifiers per band, band-major.
    Separate,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMode::Together => write!(f, "together"),
            FeatureMode::Separate => write!(f, "separate"),
        }
    }
}

impl FeatureMode {
    pub fn parse(s: &str) -> Result<FeatureMode> {
        match s {
            "together" => Ok(FeatureMode::Together),
            "separate" => Ok(FeatureMode::Separate),
            other => Err(Error::InvalidConfig(format!(
                "unknown feature mode {other:?} (expected \"together\" or \"separate\")"
            ))),
        }
    }
}

/// Feature names in the canonical order for a mode.
///
/// Separate is band-major with quantifier order (mean, variance, skewness,
/// kurtosis) inside each band, e.g. `band07_kurtosis`.
pub fn feature_names(mode: FeatureMode, n_bands: usize) -> Vec<String> {
    match mode {
        FeatureMode::Together => QUANTIFIER_NAMES.iter().map(|q| q.to_string()).collect(),
        FeatureMode::Separate => (1..=n_bands)
            .flat_map(|b| {
                QUANTIFIER_NAMES
                    .iter()
                    .map(move |q| format!("band{b:02}_{q}"))
            })
            .collect(),
    }
}

/// One run's extracted features plus its roughness-change target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub run_id: String,
    pub mode: FeatureMode,
    pub values: Vec<f64>,
    pub names: Vec<String>,
    /// Roughness delta in nm.
    pub target: f64,
}

impl FeatureVector {
    fn new(
        run_id: &str,
        mode: FeatureMode,
        values: Vec<f64>,
        names: Vec<String>,
        target: f64,
    ) -> Result<Self> {
        if values.len() != names.len() {
            return Err(Error::InvalidFeatures(format!(
                "{} values but {} names",
                values.len(),
                names.len()
            )));
        }
        let expected = match mode {
            FeatureMode::Together => 4,
            FeatureMode::Separate => 4 * crate::spectral::BAND_COUNT,
        };
        if values.len() != expected {
            return Err(Error::InvalidFeatures(format!(
                "{mode} mode expects {expected} values, got {}",
                values.len()
            )));
        }
        Ok(FeatureVector {
            run_id: run_id.to_string(),
            mode,
            values,
            names,
            target,
        })
    }
}

/// Four quantifiers per band column, band-major.
pub fn extract_separate(energies: &BandEnergies, run_id: &str, target: f64) -> FeatureVector {
    let n_bands = energies.n_bands();
    let mut values = Vec::with_capacity(4 * n_bands);
    let mut column = Vec::with_capacity(energies.frames());
    for j in 0..n_bands {
        column.clear();
        column.extend(energies.column(j));
        values.extend(moments(&column).as_array());
    }
    FeatureVector::new(
        run_id,
        FeatureMode::Separate,
        values,
        feature_names(FeatureMode::Separate, n_bands),
        target,
    )
    .expect("band-major layout matches generated names")
}

/// Quantifiers over the pooled multiset of every band-energy entry.
pub fn extract_together(energies: &BandEnergies, run_id: &str, target: f64) -> FeatureVector {
    let m = moments(energies.values());
    FeatureVector::new(
        run_id,
        FeatureMode::Together,
        m.as_array().to_vec(),
        feature_names(FeatureMode::Together, energies.n_bands()),
        target,
    )
    .expect("four values, four names")
}

/// Per-feature z-scoring fitted on a training set. Zero-spread columns are
/// centered only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Standardizer {
        assert!(!rows.is_empty(), "standardizer needs at least one row");
        let p = rows[0].len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; p];
        for row in rows {
            for (m, v) in means.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; p];
        for row in rows {
            for j in 0..p {
                let d = row[j] - means[j];
                stds[j] += d * d;
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
        }
        Standardizer { means, stds }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(self.stds.iter()))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { v - m })
            .collect()
    }
}

/// Write a feature table as CSV: header `run_id,target,<names...>`, one row
/// per run, floats with 17 significant digits for bit-exact round-trips.
pub fn write_feature_table(path: &Path, features: &[FeatureVector]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::InvalidFeatures("empty feature table".to_string()));
    }
    let names = &features[0].names;
    for fv in features {
        if &fv.names != names {
            return Err(Error::InvalidFeatures(format!(
                "run {} has a different feature layout",
                fv.run_id
            )));
        }
    }
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run_id".to_string(), "target".to_string()];
    header.extend(names.iter().cloned());
    wtr.write_record(&header).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    for fv in features {
        let mut record = vec![fv.run_id.clone(), io_util::format_f64(fv.target)];
        record.extend(fv.values.iter().map(|&v| io_util::format_f64(v)));
        wtr.write_record(&record).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    io_util::atomic_write(path, &bytes)
}

/// Read a feature table written by [`write_feature_table`]. The mode is
/// recovered from the header layout.
pub fn read_feature_table(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .clone();
    let fields: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    if fields.len() < 3 || fields[0] != "run_id" || fields[1] != "target" {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            detail: "header must start with run_id,target".to_string(),
        });
    }
    let names: Vec<String> = fields[2..].to_vec();
    let mode = if names.len() == 4 {
        FeatureMode::Together
    } else {
        FeatureMode::Separate
    };
    let mut out = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                detail: format!("row {}: cannot parse {s:?} as a number", row_no + 2),
            })
        };
        if record.len() != fields.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                detail: format!(
                    "row {}: expected {} fields, got {}",
                    row_no + 2,
                    fields.len(),
                    record.len()
                ),
            });
        }
        let run_id = record[0].to_string();
        let target = parse(&record[1])?;
        let values = record
            .iter()
            .skip(2)
            .map(parse)
            .collect::<Result<Vec<f64>>>()?;
        out.push(FeatureVector::new(
            &run_id,
            mode,
            values,
            names.clone(),
            target,
        )?);
    }
    Ok(out)
}
