use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed CSV in {path}: {detail}")]
    Csv { path: PathBuf, detail: String },

    #[error("run {run_id}: sample length mismatch (manifest declares {expected}, file holds {actual})")]
    SampleLengthMismatch {
        run_id: String,
        expected: usize,
        actual: usize,
    },

    #[error("run {run_id}: non-finite sample at index {index}")]
    NonFiniteSample { run_id: String, index: usize },

    #[error("run {run_id}: run too short: {detail}")]
    RunTooShort { run_id: String, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("spectral band {index} [{f_lo_hz}, {f_hi_hz}) Hz lies outside the spectrum range [0, {nyquist_hz}] Hz")]
    BandOutOfRange {
        index: u32,
        f_lo_hz: f64,
        f_hi_hz: f64,
        nyquist_hz: f64,
    },

    #[error("invalid micrograph: {0}")]
    InvalidMicrograph(String),

    #[error("invalid feature vector: {0}")]
    InvalidFeatures(String),

    #[error("invalid model spec: {0}")]
    InvalidModelSpec(String),

    #[error("Gram matrix factorization failed (not positive-definite); increase jitter")]
    GpFactorization,

    #[error("SVR solver did not converge within {iterations} iterations (duality gap {gap:.3e})")]
    SvrNonConvergence { iterations: usize, gap: f64 },

    #[error("feature importance is not defined for model kind {0}")]
    ImportanceUnsupported(String),

    #[error("prediction input has {actual} features, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: y_true has {true_len} entries, y_pred has {pred_len}")]
    MaeLengthMismatch { true_len: usize, pred_len: usize },

    #[error("evaluation input error: {0}")]
    InvalidEvalInput(String),

    #[error("model file {path} is unreadable: {detail}")]
    ModelFile { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
