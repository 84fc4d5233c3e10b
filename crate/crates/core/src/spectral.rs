//! Short-time Fourier analysis and spectral-band energy integration.
//!
//! A truncated run is sliced into Hamming-windowed frames, each zero-padded
//! to `fft_points` and transformed; the one-sided power |X[k]|^2 for
//! k = 0..fft_points/2 is kept raw, with no window-gain or density
//! normalization. The per-frame windowed Parseval identity
//!
//! ```text
//! sum_n (w[n] x[n])^2 = (power[0] + power[N/2] + 2 sum_{0<k<N/2} power[k]) / fft_points
//! ```
//!
//! pins this convention bit-exactly. Band energies are rectangle-rule
//! integrals over the bins whose center frequency falls in [f_lo, f_hi).

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;
use crate::signal::VibrationRun;

/// Number of spectral bands in a band set.
pub const BAND_COUNT: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    Hamming,
}

/// STFT parameters. Defaults: 1 s periodic Hamming window, no overlap,
/// 2^14 FFT points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_seconds: f64,
    pub overlap_fraction: f64,
    pub fft_points: usize,
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_seconds: 1.0,
            overlap_fraction: 0.0,
            fft_points: 1 << 14,
            window_kind: WindowKind::Hamming,
        }
    }
}

impl StftConfig {
    fn window_samples(&self, sample_rate_hz: f64) -> Result<usize> {
        if !(self.window_seconds.is_finite() && self.window_seconds > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "window_seconds must be positive, got {}",
                self.window_seconds
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidConfig(format!(
                "overlap_fraction must lie in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        let w = (self.window_seconds * sample_rate_hz).round() as usize;
        if w < 1 {
            return Err(Error::InvalidConfig(
                "window shorter than one sample".to_string(),
            ));
        }
        if self.fft_points < w {
            return Err(Error::InvalidConfig(format!(
                "fft_points ({}) smaller than the {w}-sample window; frames are zero-padded, never truncated",
                self.fft_points
            )));
        }
        Ok(w)
    }

    fn hop_samples(&self, window: usize) -> usize {
        ((window as f64) * (1.0 - self.overlap_fraction)).round().max(1.0) as usize
    }
}

/// Periodic Hamming window of length `n`.
fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Time-frequency one-sided power matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    /// Row-major frames x bins, entries |X[k]|^2 >= 0.
    power: Vec<f64>,
    /// Frequency spacing between bins: sample_rate / fft_points.
    pub bin_hz: f64,
    /// Time step between frame starts (the hop), in seconds.
    pub frame_seconds: f64,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_power(&self, t: usize) -> &[f64] {
        &self.power[t * self.bins..(t + 1) * self.bins]
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.bin_hz * (self.bins - 1) as f64
    }
}

/// Transform a truncated run into a spectrogram. Frames are independent and
/// evaluated in parallel; the result is identical to sequential evaluation.
pub fn stft(run: &VibrationRun, cfg: &StftConfig) -> Result<Spectrogram> {
    let fs = run.manifest.sample_rate_hz;
    let window = cfg.window_samples(fs)?;
    let n = run.samples.len();
    if n < window {
        return Err(Error::RunTooShort {
            run_id: run.manifest.run_id.clone(),
            detail: format!("{n} samples is shorter than one {window}-sample window"),
        });
    }
    let hop = cfg.hop_samples(window);
    let frames = (n - window) / hop + 1;
    let bins = cfg.fft_points / 2 + 1;
    let coeffs = hamming(window);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.fft_points);

    let mut power = vec![0.0; frames * bins];
    power
        .par_chunks_mut(bins)
        .enumerate()
        .for_each(|(t, out)| {
            let start = t * hop;
            let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_points];
            for (i, (&x, &w)) in run.samples[start..start + window]
                .iter()
                .zip(coeffs.iter())
                .enumerate()
            {
                buf[i] = Complex::new(x * w, 0.0);
            }
            fft.process(&mut buf);
            for (k, o) in out.iter_mut().enumerate() {
                *o = buf[k].norm_sqr();
            }
        });

    Ok(Spectrogram {
        frames,
        bins,
        power,
        bin_hz: fs / cfg.fft_points as f64,
        frame_seconds: hop as f64 / fs,
    })
}

/// A contiguous frequency interval [f_lo, f_hi) used for energy integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBand {
    pub index: u32,
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
}

/// Thirteen pairwise disjoint bands sorted by lower edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SpectralBand>", into = "Vec<SpectralBand>")]
pub struct BandSet {
    bands: Vec<SpectralBand>,
}

impl TryFrom<Vec<SpectralBand>> for BandSet {
    type Error = Error;

    fn try_from(bands: Vec<SpectralBand>) -> Result<Self> {
        BandSet::new(bands)
    }
}

impl From<BandSet> for Vec<SpectralBand> {
    fn from(set: BandSet) -> Vec<SpectralBand> {
        set.bands
    }
}

impl BandSet {
    pub fn new(bands: Vec<SpectralBand>) -> Result<BandSet> {
        if bands.len() != BAND_COUNT {
            return Err(Error::InvalidConfig(format!(
                "a band set holds exactly {BAND_COUNT} bands, got {}",
                bands.len()
            )));
        }
        for (i, b) in bands.iter().enumerate() {
            if b.index as usize != i + 1 {
                return Err(Error::InvalidConfig(format!(
                    "band at position {i} has index {}, expected {}",
                    b.index,
                    i + 1
                )));
            }
            if !(b.f_lo_hz.is_finite() && b.f_hi_hz.is_finite() && b.f_lo_hz >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "band {}: edges must be finite and non-negative",
                    b.index
                )));
            }
            if b.f_lo_hz >= b.f_hi_hz {
                return Err(Error::InvalidConfig(format!(
                    "band {}: f_lo {} must be below f_hi {}",
                    b.index, b.f_lo_hz, b.f_hi_hz
                )));
            }
            if i > 0 && bands[i - 1].f_hi_hz > b.f_lo_hz {
                return Err(Error::InvalidConfig(format!(
                    "bands {} and {} overlap or are out of order",
                    bands[i - 1].index,
                    b.index
                )));
            }
        }
        Ok(BandSet { bands })
    }

    /// Default 13 disjoint bands covering 0-5 kHz: band 1 spans [0, 20) Hz
    /// and the remaining edges are log-spaced from 20 Hz to 5 kHz.
    pub fn default_bands() -> BandSet {
        let (lo, hi) = (20.0f64, 5000.0f64);
        let mut edges = vec![0.0];
        for i in 0..BAND_COUNT {
            edges.push(lo * (hi / lo).powf(i as f64 / (BAND_COUNT - 1) as f64));
        }
        let bands = (0..BAND_COUNT)
            .map(|i| SpectralBand {
                index: (i + 1) as u32,
                f_lo_hz: edges[i],
                f_hi_hz: edges[i + 1],
            })
            .collect();
        BandSet::new(bands).expect("default edges are valid")
    }

    pub fn bands(&self) -> &[SpectralBand] {
        &self.bands
    }

    pub fn band(&self, index: u32) -> Option<&SpectralBand> {
        self.bands.iter().find(|b| b.index == index)
    }

    pub fn load(path: &Path) -> Result<BandSet> {
        io_util::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::atomic_write_json(path, self)
    }
}

/// Rectangle-rule energy of one frame over a band: sum of power[k] * bin_hz
/// for the bins whose center k * bin_hz lies in [f_lo, f_hi).
pub fn band_energy(frame_power: &[f64], bin_hz: f64, band: &SpectralBand) -> Result<f64> {
    let nyquist = bin_hz * (frame_power.len() - 1) as f64;
    if band.f_lo_hz < 0.0 || band.f_hi_hz > nyquist * (1.0 + 1e-12) {
        return Err(Error::BandOutOfRange {
            index: band.index,
            f_lo_hz: band.f_lo_hz,
            f_hi_hz: band.f_hi_hz,
            nyquist_hz: nyquist,
        });
    }
    let k_start = (band.f_lo_hz / bin_hz).floor().max(0.0) as usize;
    let k_stop = (((band.f_hi_hz / bin_hz).ceil() as usize) + 1).min(frame_power.len());
    let mut energy = 0.0;
    for k in k_start..k_stop {
        let f = k as f64 * bin_hz;
        if f >= band.f_lo_hz && f < band.f_hi_hz {
            energy += frame_power[k] * bin_hz;
        }
    }
    Ok(energy)
}

/// Row-major frames x bands energy matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergies {
    frames: usize,
    n_bands: usize,
    values: Vec<f64>,
}

impl BandEnergies {
    pub fn from_raw(frames: usize, n_bands: usize, values: Vec<f64>) -> BandEnergies {
        assert_eq!(values.len(), frames * n_bands);
        BandEnergies {
            frames,
            n_bands,
            values,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn value(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.n_bands + j]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_bands..(t + 1) * self.n_bands]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.frames).map(move |t| self.value(t, j))
    }

    /// All entries in row-major order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Integrate every band over every frame.
pub fn band_energy_series(spec: &Spectrogram, bands: &BandSet) -> Result<BandEnergies> {
    // Validate all bands up front so errors do not depend on frame order.
    for band in bands.bands() {
        band_energy(spec.frame_power(0), spec.bin_hz, band)?;
    }
    let n_bands = bands.bands().len();
    let mut values = vec![0.0; spec.frames() * n_bands];
    values
        .par_chunks_mut(n_bands)
        .enumerate()
        .for_each(|(t, out)| {
            let frame = spec.frame_power(t);
            for (j, band) in bands.bands().iter().enumerate() {
                out[j] = band_energy(frame, spec.bin_hz, band)
                    .expect("validated against the spectrum above");
            }
        });
    Ok(BandEnergies::from_raw(spec.frames(), n_bands, values))
}
