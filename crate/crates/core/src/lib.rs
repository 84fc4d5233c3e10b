//! polishsense predicts the change in areal surface roughness of a capsule
//! polishing run from in-situ vibration signals.
//!
//! The pipeline is staged: raw accelerometer runs are loaded and truncated
//! ([`signal`]), transformed into spectrograms and integrated into per-frame
//! spectral-band energies ([`spectral`]), reduced to per-run statistical
//! quantifiers ([`features`]), and fed to a zoo of seven regression models
//! ([`models`]) evaluated under leave-one-out cross-validation ([`eval`]).
//! Roughness targets come from confocal micrograph height matrices
//! ([`surface`]). Because the measured dataset is not distributable,
//! [`datagen`] synthesizes polishing campaigns with a planted band-level
//! signal so the whole pipeline can be exercised end to end.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod signal;
pub mod spectral;
pub mod surface;

mod io_util;
mod seed;

pub use error::{Error, Result};
