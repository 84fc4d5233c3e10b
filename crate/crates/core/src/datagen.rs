//! Synthetic polishing campaigns with a planted band-level signal.
//!
//! The measured dataset is proprietary, so the pipeline is exercised on
//! generated runs: broadband Gaussian noise plus, inside the retained
//! window, summed random-phase sinusoids confined to the configured signal
//! bands. Each signal band's RMS is an affine function of the run's drawn
//! roughness delta (base_rms + coupling * delta), so band energies carry a
//! known ground-truth coupling to the target. Sinusoid frequencies stay 15%
//! of the band width away from both edges, which keeps spectral leakage
//! outside the band negligible.
//!
//! Micrographs realize each drawn delta exactly: one fixed zero-mean
//! texture is rescaled so Sa(before) - Sa(after) equals the delta, using
//! the linear-scaling property of Sa.
//!
//! Everything is seeded: per-run generators derive from (seed, run index),
//! so runs generate independently, in any order, byte-identically.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;
use crate::seed;
use crate::signal::{self, ExperimentClass, RunManifest, VibrationRun};
use crate::spectral::BandSet;
use crate::surface::{self, Micrograph, RoughnessTarget};

/// All runs are synthesized at the nominal accelerometer rate.
pub const SAMPLE_RATE_HZ: f64 = 10_000.0;

/// Sinusoids planted per signal band.
const SINES_PER_BAND: usize = 3;

/// Fraction of band width kept clear at each edge when drawing sinusoid
/// frequencies.
const EDGE_MARGIN: f64 = 0.15;

const RUN_STREAM: u64 = 0x52554E; // "RUN"
const TEXTURE_SEED: u64 = 0x5445585455524531; // fixed texture, shared by every run

pub const DATASET_MANIFEST_FILE: &str = "dataset.json";
pub const MICROGRAPH_BEFORE_FILE: &str = "before.csv";
pub const MICROGRAPH_AFTER_FILE: &str = "after.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_short: usize,
    pub n_long: usize,
    pub band_set: BandSet,
    /// Band indices that receive planted components.
    pub signal_bands: BTreeSet<u32>,
    /// Standard deviation of the broadband Gaussian noise.
    pub noise_floor: f64,
    /// Per-band RMS slope against the drawn delta.
    pub coupling: BTreeMap<u32, f64>,
    /// Per-band RMS offset (the affine intercept).
    pub base_rms: f64,
    pub target_range_short: (f64, f64),
    pub target_range_long: (f64, f64),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            n_short: 18,
            n_long: 6,
            band_set: BandSet::default_bands(),
            signal_bands: BTreeSet::from([2, 9, 12]),
            noise_floor: 0.1,
            coupling: BTreeMap::from([(2, 0.6), (9, 0.35), (12, 0.2)]),
            base_rms: 0.05,
            target_range_short: (0.008, 3.02),
            target_range_long: (1.06, 2.28),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for &(lo, hi) in [&self.target_range_short, &self.target_range_long] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "target range ({lo}, {hi}) must be positive and ordered"
                )));
            }
        }
        if !(self.noise_floor.is_finite() && self.noise_floor >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_floor must be >= 0, got {}",
                self.noise_floor
            )));
        }
        if !(self.base_rms.is_finite() && self.base_rms >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "base_rms must be >= 0, got {}",
                self.base_rms
            )));
        }
        for &b in &self.signal_bands {
            if self.band_set.band(b).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "signal band {b} is not in the band set"
                )));
            }
        }
        for (&b, &w) in &self.coupling {
            if self.band_set.band(b).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "coupling references band {b} outside the band set"
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "coupling for band {b} must be finite, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = io_util::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::atomic_write_json(path, self)
    }

    pub fn n_runs(&self) -> usize {
        self.n_short + self.n_long
    }

    fn class_of(&self, run_index: usize) -> ExperimentClass {
        if run_index < self.n_short {
            ExperimentClass::Short6Min
        } else {
            ExperimentClass::Long12Hr
        }
    }

    fn run_id_of(&self, run_index: usize) -> (String, u32) {
        match self.class_of(run_index) {
            ExperimentClass::Short6Min => {
                let stage = run_index as u32 + 1;
                (format!("short-{stage:02}"), stage)
            }
            ExperimentClass::Long12Hr => {
                let stage = (run_index - self.n_short) as u32 + 1;
                (format!("long-{stage:02}"), stage)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: String,
    pub experiment_class: ExperimentClass,
    pub stage_index: u32,
    /// The drawn roughness delta the micrographs realize, in nm.
    pub target_delta: f64,
    /// Run directory, relative to the dataset root.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    /// Band set the planted components were placed against; extraction
    /// defaults to the same bands.
    pub band_set: BandSet,
    pub runs: Vec<RunEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        io_util::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::atomic_write_json(path, self)
    }
}

/// The shared 128x128 zero-mean texture all micrographs are scaled from.
fn texture() -> &'static Micrograph {
    static TEXTURE: OnceLock<Micrograph> = OnceLock::new();
    TEXTURE.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(TEXTURE_SEED);
        let mut heights: Vec<f64> = (0..128 * 128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = heights.iter().sum::<f64>() / heights.len() as f64;
        for h in &mut heights {
            *h -= mean;
        }
        Micrograph::new(heights, 128, 128, 1.0).expect("fixed texture is valid")
    })
}

/// Generate one run directory (vibration samples plus the before/after
/// micrograph pair realizing the drawn delta) under `out_root`.
///
/// Draw order from the per-run generator is fixed: delta, then the after-Sa
/// level, then per signal band SINES_PER_BAND (frequency, phase) pairs,
/// then one noise value per sample. Same (seed, run_index) means
/// byte-identical files.
pub fn gen_run(
    cfg: &ScenarioConfig,
    run_index: usize,
    out_root: &Path,
) -> Result<(RunEntry, RoughnessTarget)> {
    cfg.validate()?;
    if run_index >= cfg.n_runs() {
        return Err(Error::InvalidConfig(format!(
            "run index {run_index} out of range for {} runs",
            cfg.n_runs()
        )));
    }
    let class = cfg.class_of(run_index);
    let (run_id, stage_index) = cfg.run_id_of(run_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
        cfg.seed,
        &[RUN_STREAM, run_index as u64],
    ));

    let (lo, hi) = match class {
        ExperimentClass::Short6Min => cfg.target_range_short,
        ExperimentClass::Long12Hr => cfg.target_range_long,
    };
    let delta = rng.random_range(lo..hi);
    let sa_after = rng.random_range(0.2..0.5);
    let sa_before = sa_after + delta;

    // Sinusoid placement: frequencies clear of the band edges so leakage
    // stays inside the declared interval.
    let mut components: Vec<(f64, f64, f64)> = Vec::new(); // (freq, phase, amplitude)
    for &band_index in &cfg.signal_bands {
        let band = cfg.band_set.band(band_index).expect("validated above");
        let width = band.f_hi_hz - band.f_lo_hz;
        let slope = cfg.coupling.get(&band_index).copied().unwrap_or(0.0);
        let rms = (cfg.base_rms + slope * delta).max(0.0);
        let amplitude = rms * (2.0 / SINES_PER_BAND as f64).sqrt();
        for _ in 0..SINES_PER_BAND {
            let freq = rng.random_range(
                band.f_lo_hz + EDGE_MARGIN * width..band.f_hi_hz - EDGE_MARGIN * width,
            );
            let phase = rng.random_range(0.0..2.0 * PI);
            components.push((freq, phase, amplitude));
        }
    }

    let (sample_count, pre_truncated) = match class {
        ExperimentClass::Short6Min => ((360.0 * SAMPLE_RATE_HZ) as usize, false),
        ExperimentClass::Long12Hr => ((240.0 * SAMPLE_RATE_HZ) as usize, true),
    };
    let manifest = RunManifest {
        run_id: run_id.clone(),
        experiment_class: class,
        stage_index,
        sample_rate_hz: SAMPLE_RATE_HZ,
        sample_count,
        pre_truncated,
    };
    let retained = if pre_truncated {
        0..sample_count
    } else {
        signal::truncation_bounds(&manifest)?
    };

    let noise = Normal::new(0.0, cfg.noise_floor).map_err(|e| {
        Error::InvalidConfig(format!("noise distribution: {e}"))
    })?;
    let mut samples: Vec<f64> = Vec::with_capacity(sample_count);
    for t in 0..sample_count {
        let mut value = noise.sample(&mut rng);
        if retained.contains(&t) {
            let time = t as f64 / SAMPLE_RATE_HZ;
            for &(freq, phase, amplitude) in &components {
                value += amplitude * (2.0 * PI * freq * time + phase).sin();
            }
        }
        samples.push(value);
    }
    let run = VibrationRun::new(manifest, samples)?;

    let base = texture();
    let base_sa = surface::areal_roughness(base);
    let before = base.scaled(sa_before / base_sa);
    let after = base.scaled(sa_after / base_sa);

    let dir = out_root.join("runs").join(&run_id);
    signal::save_run(&dir, &run)?;
    before.write_csv(&dir.join(MICROGRAPH_BEFORE_FILE))?;
    after.write_csv(&dir.join(MICROGRAPH_AFTER_FILE))?;

    let entry = RunEntry {
        run_id: run_id.clone(),
        experiment_class: class,
        stage_index,
        target_delta: delta,
        path: format!("runs/{run_id}"),
    };
    let target = RoughnessTarget {
        run_id,
        sa_before,
        sa_after,
        delta,
    };
    Ok((entry, target))
}

/// Generate the whole campaign (shorts first, then longs) and its manifest.
pub fn gen_dataset(cfg: &ScenarioConfig, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let entries: Vec<(RunEntry, RoughnessTarget)> = (0..cfg.n_runs())
        .into_par_iter()
        .map(|i| gen_run(cfg, i, out_dir))
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest {
        seed: cfg.seed,
        band_set: cfg.band_set.clone(),
        runs: entries.into_iter().map(|(e, _)| e).collect(),
    };
    manifest.save(&out_dir.join(DATASET_MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{band_energy_series, stft, StftConfig};

    fn tiny_config(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            seed,
            n_short: 1,
            n_long: 1,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn default_counts_mirror_the_campaign() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.n_short, 18);
        assert_eq!(cfg.n_long, 6);
        assert_eq!(cfg.n_runs(), 24);
        assert_eq!(cfg.signal_bands, BTreeSet::from([2, 9, 12]));
        cfg.validate().unwrap();
    }

    #[test]
    fn scenario_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let cfg = tiny_config(5);
        cfg.save(&path).unwrap();
        assert_eq!(ScenarioConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn validation_rejects_alien_bands_and_bad_ranges() {
        let mut cfg = tiny_config(0);
        cfg.signal_bands.insert(14);
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config(0);
        cfg.coupling.insert(99, 1.0);
        assert!(cfg.validate().is_err());

        let mut cfg = tiny_config(0);
        cfg.target_range_short = (3.0, 1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn generated_run_round_trips_and_realizes_delta() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(11);
        cfg.n_short = 0; // a single pre-truncated long run keeps this fast
        let (entry, target) = gen_run(&cfg, 0, dir.path()).unwrap();
        assert_eq!(entry.experiment_class, ExperimentClass::Long12Hr);

        let run_dir = dir.path().join(&entry.path);
        let run = signal::load_run(&run_dir).unwrap();
        assert_eq!(run.samples.len(), 2_400_000);
        assert!(run.manifest.pre_truncated);

        let before = Micrograph::read_csv(&run_dir.join(MICROGRAPH_BEFORE_FILE)).unwrap();
        let after = Micrograph::read_csv(&run_dir.join(MICROGRAPH_AFTER_FILE)).unwrap();
        let recomputed = surface::roughness_delta(&before, &after, &entry.run_id);
        assert!(
            (recomputed.delta - target.delta).abs() < 1e-9,
            "recomputed {} vs drawn {}",
            recomputed.delta,
            target.delta
        );
        assert!((recomputed.sa_before - target.sa_before).abs() < 1e-9);
        assert!(recomputed.sa_after < recomputed.sa_before);
    }

    #[test]
    fn same_seed_regenerates_byte_identical_files() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(42);
        cfg.n_short = 0;
        gen_run(&cfg, 0, dir_a.path()).unwrap();
        gen_run(&cfg, 0, dir_b.path()).unwrap();
        for file in ["manifest.json", "samples.f64le", "before.csv", "after.csv"] {
            let a = std::fs::read(dir_a.path().join("runs/long-01").join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join("runs/long-01").join(file)).unwrap();
            assert_eq!(a, b, "{file} differs");
        }
    }

    #[test]
    fn planted_components_stay_inside_their_bands() {
        // One signal band, no noise: at least 95% of total spectral energy
        // must fall inside the declared interval. Cut the run down to a few
        // frames to keep this quick.
        let dir = tempfile::tempdir().unwrap();
        for band_index in [2u32, 9, 12] {
            let mut cfg = ScenarioConfig {
                n_short: 0,
                n_long: 1,
                noise_floor: 0.0,
                signal_bands: BTreeSet::from([band_index]),
                ..ScenarioConfig::default()
            };
            cfg.seed = 1000 + band_index as u64;
            let out = dir.path().join(format!("band{band_index}"));
            let (entry, _) = gen_run(&cfg, 0, &out).unwrap();
            let mut run = signal::load_run(&out.join(&entry.path)).unwrap();
            run.samples.truncate(50_000);
            run.manifest.sample_count = 50_000;
            let spec = stft(&run, &StftConfig::default()).unwrap();
            let energies = band_energy_series(&spec, &cfg.band_set).unwrap();
            for t in 0..spec.frames() {
                let in_band = energies.value(t, band_index as usize - 1);
                let total: f64 = spec.frame_power(t).iter().map(|p| p * spec.bin_hz).sum();
                assert!(
                    in_band >= 0.95 * total,
                    "band {band_index}, frame {t}: {in_band} < 95% of {total}"
                );
            }
        }
    }

    #[test]
    fn dataset_manifest_lists_all_runs_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(7);
        cfg.n_short = 2;
        cfg.n_long = 1;
        let manifest = gen_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.runs.len(), 3);
        assert_eq!(manifest.runs[0].run_id, "short-01");
        assert_eq!(manifest.runs[1].run_id, "short-02");
        assert_eq!(manifest.runs[2].run_id, "long-01");
        assert_eq!(manifest.runs[2].stage_index, 1);
        for entry in &manifest.runs {
            let (lo, hi) = match entry.experiment_class {
                ExperimentClass::Short6Min => cfg.target_range_short,
                ExperimentClass::Long12Hr => cfg.target_range_long,
            };
            assert!(entry.target_delta >= lo && entry.target_delta < hi);
        }
        let loaded = DatasetManifest::load(&dir.path().join(DATASET_MANIFEST_FILE)).unwrap();
        assert_eq!(loaded, manifest);
    }

    #[test]
    fn long_runs_are_exactly_the_retained_window() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(9);
        cfg.n_short = 0;
        let (entry, _) = gen_run(&cfg, 0, dir.path()).unwrap();
        let run = signal::load_run(&dir.path().join(&entry.path)).unwrap();
        assert_eq!(run.duration_seconds(), 240.0);
        let truncated = signal::truncate_run(run.clone()).unwrap();
        assert_eq!(truncated, run);
    }
}
