//! Areal surface roughness from confocal micrograph height matrices.
//!
//! A micrograph is a rows x cols matrix of surface heights in nanometers.
//! The roughness measure is Sa, the mean absolute deviation of height from
//! the mean height over the measured area. The prediction target for one
//! polishing run is the absolute change in Sa between the micrographs taken
//! before and after the run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;

/// Height matrix in nanometers, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Micrograph {
    heights: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Area of one cell in nm^2. Cancels out of Sa for a uniform grid.
    pixel_area: f64,
}

/// Optional sidecar (`micrograph.json`) carried next to a height CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MicrographSidecar {
    pixel_area: f64,
}

impl Micrograph {
    pub fn new(heights: Vec<f64>, rows: usize, cols: usize, pixel_area: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMicrograph(format!(
                "dimensions must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if heights.len() != rows * cols {
            return Err(Error::InvalidMicrograph(format!(
                "expected {rows}x{cols} = {} heights, got {}",
                rows * cols,
                heights.len()
            )));
        }
        if !(pixel_area.is_finite() && pixel_area > 0.0) {
            return Err(Error::InvalidMicrograph(format!(
                "pixel_area must be finite and positive, got {pixel_area}"
            )));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::InvalidMicrograph(format!(
                "non-finite height at flat index {i}"
            )));
        }
        Ok(Micrograph {
            heights,
            rows,
            cols,
            pixel_area,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_area
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Multiply every height by `k` (Sa scales by |k|).
    pub fn scaled(&self, k: f64) -> Micrograph {
        Micrograph {
            heights: self.heights.iter().map(|h| h * k).collect(),
            rows: self.rows,
            cols: self.cols,
            pixel_area: self.pixel_area,
        }
    }

    /// Read heights from a row-major CSV with no header (values in nm).
    /// If a `micrograph.json` sidecar exists in the same directory it
    /// supplies `pixel_area`; otherwise 1.0 is assumed.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut heights = Vec::new();
        let mut cols = None;
        let mut rows = 0usize;
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row_len = 0usize;
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                    path: path.to_path_buf(),
                    detail: format!("line {}: cannot parse {:?} as a number", line_no + 1, field),
                })?;
                heights.push(v);
                row_len += 1;
            }
            match cols {
                None => cols = Some(row_len),
                Some(c) if c != row_len => {
                    return Err(Error::Csv {
                        path: path.to_path_buf(),
                        detail: format!(
                            "line {}: expected {c} columns, got {row_len}",
                            line_no + 1
                        ),
                    });
                }
                _ => {}
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::Csv {
            path: path.to_path_buf(),
            detail: "empty micrograph file".to_string(),
        })?;
        let pixel_area = match read_sidecar(path)? {
            Some(s) => s.pixel_area,
            None => 1.0,
        };
        Micrograph::new(heights, rows, cols, pixel_area)
    }

    /// Write heights as a row-major CSV with no header, 17 significant
    /// digits per value so the file round-trips bit-exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for r in 0..self.rows {
            let row = &self.heights[r * self.cols..(r + 1) * self.cols];
            let line: Vec<String> = row.iter().map(|&v| io_util::format_f64(v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        io_util::atomic_write(path, out.as_bytes())
    }
}

fn read_sidecar(csv_path: &Path) -> Result<Option<MicrographSidecar>> {
    let sidecar = csv_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("micrograph.json");
    if sidecar.exists() {
        Ok(Some(io_util::read_json(&sidecar)?))
    } else {
        Ok(None)
    }
}

/// Per-run roughness-change target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessTarget {
    pub run_id: String,
    pub sa_before: f64,
    pub sa_after: f64,
    /// |sa_after - sa_before|, in nm. Both Sa values are kept so a signed
    /// convention stays recoverable.
    pub delta: f64,
}

/// Areal surface roughness Sa in nm: the area-weighted mean absolute
/// deviation of height from the mean height.
pub fn areal_roughness(m: &Micrograph) -> f64 {
    let n = m.heights.len() as f64;
    let area = n * m.pixel_area;
    let mean = m.heights.iter().sum::<f64>() / n;
    let abs_dev_sum: f64 = m.heights.iter().map(|h| (h - mean).abs()).sum();
    abs_dev_sum * m.pixel_area / area
}

/// Compute the roughness-change target for a run from its before/after
/// micrographs.
pub fn roughness_delta(before: &Micrograph, after: &Micrograph, run_id: &str) -> RoughnessTarget {
    let sa_before = areal_roughness(before);
    let sa_after = areal_roughness(after);
    RoughnessTarget {
        run_id: run_id.to_string(),
        sa_before,
        sa_after,
        delta: (sa_after - sa_before).abs(),
    }
}
