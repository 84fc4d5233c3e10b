//! Raw vibration runs: on-disk layout, validation, and truncation.
//!
//! A run directory holds `manifest.json` plus `samples.f64le`, a headerless
//! stream of little-endian 64-bit floats. Two experiment protocols exist:
//! short 6-minute runs lose their first and last minute (machine startup and
//! ramp-down transients), long 12-hour runs keep only their final 4 minutes
//! so both classes feed the same 4-minute window downstream.
//!
//! Truncation is defined in samples through `sample_rate_hz`, never through
//! wall-clock metadata, so synthetic runs of other lengths behave
//! predictably. Long runs may be written pre-truncated (only the retained
//! window materialized) to avoid multi-gigabyte files; the manifest records
//! this in `pre_truncated`.

use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.f64le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentClass {
    #[serde(rename = "short6min")]
    Short6Min,
    #[serde(rename = "long12hr")]
    Long12Hr,
}

impl ExperimentClass {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentClass::Short6Min => "short6min",
            ExperimentClass::Long12Hr => "long12hr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub experiment_class: ExperimentClass,
    pub stage_index: u32,
    pub sample_rate_hz: f64,
    pub sample_count: usize,
    /// True when the stored samples are already the retained window.
    #[serde(default)]
    pub pre_truncated: bool,
}

impl RunManifest {
    fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "run {}: sample_rate_hz must be positive, got {}",
                self.run_id, self.sample_rate_hz
            )));
        }
        if self.stage_index < 1 {
            return Err(Error::InvalidConfig(format!(
                "run {}: stage_index must be at least 1",
                self.run_id
            )));
        }
        Ok(())
    }
}

/// One polishing run's raw time series plus its manifest. Immutable after
/// construction; every sample is validated finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VibrationRun {
    pub manifest: RunManifest,
    pub samples: Vec<f64>,
}

impl VibrationRun {
    pub fn new(manifest: RunManifest, samples: Vec<f64>) -> Result<VibrationRun> {
        manifest.validate()?;
        if samples.len() != manifest.sample_count {
            return Err(Error::SampleLengthMismatch {
                run_id: manifest.run_id.clone(),
                expected: manifest.sample_count,
                actual: samples.len(),
            });
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample {
                run_id: manifest.run_id.clone(),
                index,
            });
        }
        Ok(VibrationRun { manifest, samples })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.manifest.sample_rate_hz
    }
}

/// Load and validate a run directory.
pub fn load_run(dir: &Path) -> Result<VibrationRun> {
    let manifest: RunManifest = io_util::read_json(&dir.join(MANIFEST_FILE))?;
    let sample_path = dir.join(SAMPLES_FILE);
    let bytes = fs::read(&sample_path).map_err(|e| Error::io(&sample_path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Csv {
            path: sample_path,
            detail: format!("sample file length {} is not a multiple of 8", bytes.len()),
        });
    }
    let samples: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VibrationRun::new(manifest, samples)
}

/// Write a run directory (manifest + raw samples), atomically per file.
pub fn save_run(dir: &Path, run: &VibrationRun) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io_util::atomic_write_json(&dir.join(MANIFEST_FILE), &run.manifest)?;
    let mut bytes = Vec::with_capacity(run.samples.len() * 8);
    for s in &run.samples {
        bytes.extend_from_slice(&s.to_le_bytes());
    }
    io_util::atomic_write(&dir.join(SAMPLES_FILE), &bytes)
}

/// The retained sample range for a manifest, by experiment class:
/// short runs drop the leading and trailing minute, long runs keep the final
/// four minutes.
pub fn truncation_bounds(manifest: &RunManifest) -> Result<Range<usize>> {
    let fs = manifest.sample_rate_hz;
    let n = manifest.sample_count;
    match manifest.experiment_class {
        ExperimentClass::Short6Min => {
            let cut = (60.0 * fs).round() as usize;
            if n <= 2 * cut {
                return Err(Error::RunTooShort {
                    run_id: manifest.run_id.clone(),
                    detail: format!(
                        "short run of {n} samples cannot lose {cut} samples from each end"
                    ),
                });
            }
            Ok(cut..n - cut)
        }
        ExperimentClass::Long12Hr => {
            let keep = (240.0 * fs).round() as usize;
            if n < keep {
                return Err(Error::RunTooShort {
                    run_id: manifest.run_id.clone(),
                    detail: format!("long run of {n} samples is shorter than the {keep}-sample retained window"),
                });
            }
            Ok(n - keep..n)
        }
    }
}

/// Reduce a run to its retained window. A run already marked
/// `pre_truncated` passes through unchanged. The returned manifest carries
/// the updated sample count and `pre_truncated = true`.
pub fn truncate_run(run: VibrationRun) -> Result<VibrationRun> {
    if run.manifest.pre_truncated {
        return Ok(run);
    }
    let bounds = truncation_bounds(&run.manifest)?;
    let mut manifest = run.manifest;
    manifest.sample_count = bounds.len();
    manifest.pre_truncated = true;
    let samples = run.samples[bounds].to_vec();
    VibrationRun::new(manifest, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn manifest(class: ExperimentClass, fs: f64, count: usize) -> RunManifest {
        RunManifest {
            run_id: "r1".to_string(),
            experiment_class: class,
            stage_index: 1,
            sample_rate_hz: fs,
            sample_count: count,
            pre_truncated: false,
        }
    }

    #[test]
    fn load_save_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let samples: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let run = VibrationRun::new(manifest(ExperimentClass::Short6Min, 10_000.0, 8), samples)
            .unwrap();
        save_run(dir.path(), &run).unwrap();
        let back = load_run(dir.path()).unwrap();
        assert_eq!(run, back);
    }

    #[test]
    fn length_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let run = VibrationRun::new(
            manifest(ExperimentClass::Short6Min, 10_000.0, 8),
            vec![0.5; 8],
        )
        .unwrap();
        save_run(dir.path(), &run).unwrap();
        // Rewrite the sample file with 7 values only.
        let mut bytes = Vec::new();
        for _ in 0..7 {
            bytes.extend_from_slice(&0.5f64.to_le_bytes());
        }
        fs::write(dir.path().join(SAMPLES_FILE), bytes).unwrap();
        let err = load_run(dir.path()).unwrap_err();
        assert!(err.to_string().contains("length mismatch"), "{err}");
        assert!(err.to_string().contains('7'), "{err}");
    }

    #[test]
    fn non_finite_sample_reports_index() {
        let dir = tempfile::tempdir().unwrap();
        let run = VibrationRun::new(
            manifest(ExperimentClass::Short6Min, 10_000.0, 8),
            vec![0.5; 8],
        )
        .unwrap();
        save_run(dir.path(), &run).unwrap();
        let mut bytes = Vec::new();
        for i in 0..8 {
            let v = if i == 3 { f64::NAN } else { 0.5 };
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.path().join(SAMPLES_FILE), bytes).unwrap();
        let err = load_run(dir.path()).unwrap_err();
        assert!(err.to_string().contains("index 3"), "{err}");
    }

    #[test]
    fn missing_files_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_run(dir.path()).is_err());
    }

    #[test]
    fn short_run_truncation_drops_both_transients() {
        // fs = 10 Hz keeps the test tiny; the rule is per-sample via fs.
        let fs = 10.0;
        let n = 3600; // 6 "minutes"
        let samples: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let run = VibrationRun::new(
            manifest(ExperimentClass::Short6Min, fs, n),
            samples.clone(),
        )
        .unwrap();
        let truncated = truncate_run(run).unwrap();
        assert_eq!(truncated.samples.len(), 2400);
        assert_eq!(truncated.manifest.sample_count, 2400);
        assert!(truncated.manifest.pre_truncated);
        assert_eq!(truncated.samples[..], samples[600..3000]);
    }

    #[test]
    fn paper_scale_bounds() {
        let m = manifest(ExperimentClass::Short6Min, 10_000.0, 360 * 10_000);
        let b = truncation_bounds(&m).unwrap();
        assert_eq!(b, 600_000..3_000_000);
        assert_eq!(b.len(), 240 * 10_000);

        let m = manifest(ExperimentClass::Long12Hr, 10_000.0, 432_000_000);
        let b = truncation_bounds(&m).unwrap();
        assert_eq!(b.len(), 240 * 10_000);
        assert_eq!(b.end, 432_000_000);
    }

    #[test]
    fn long_run_keeps_final_window_and_is_idempotent() {
        let fs = 10.0;
        let n = 4000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let run =
            VibrationRun::new(manifest(ExperimentClass::Long12Hr, fs, n), samples.clone())
                .unwrap();
        let once = truncate_run(run).unwrap();
        assert_eq!(once.samples[..], samples[1600..]);
        assert_eq!(once.samples.len(), 2400);
        let twice = truncate_run(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn long_run_exactly_retained_length_is_identity_on_samples() {
        let fs = 10.0;
        let samples: Vec<f64> = (0..2400).map(|i| i as f64 * 0.25).collect();
        let run = VibrationRun::new(
            manifest(ExperimentClass::Long12Hr, fs, 2400),
            samples.clone(),
        )
        .unwrap();
        let truncated = truncate_run(run).unwrap();
        assert_eq!(truncated.samples, samples);
    }

    #[test]
    fn too_short_runs_error() {
        let run = VibrationRun::new(
            manifest(ExperimentClass::Short6Min, 10_000.0, 100),
            vec![0.0; 100],
        )
        .unwrap();
        let err = truncate_run(run).unwrap_err();
        assert!(err.to_string().contains("too short"), "{err}");

        let run = VibrationRun::new(
            manifest(ExperimentClass::Long12Hr, 10.0, 100),
            vec![0.0; 100],
        )
        .unwrap();
        assert!(truncate_run(run).is_err());
    }

    #[test]
    fn pre_truncated_passes_through() {
        let mut m = manifest(ExperimentClass::Short6Min, 10.0, 5);
        m.pre_truncated = true;
        let run = VibrationRun::new(m, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let out = truncate_run(run.clone()).unwrap();
        assert_eq!(run, out);
    }
}
