use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error(
        "calibration target {target:.4} °C is not bracketed: resistance {resistance} Ω gives mean {achieved:.4} °C"
    )]
    NoBracket {
        target: f64,
        resistance: f64,
        achieved: f64,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: line {line}: non-finite value")]
    NonFinite { path: PathBuf, line: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dataset is empty after cleaning ({dropped} rows dropped)")]
    EmptyAfterCleaning { dropped: usize },

    #[error("degenerate split: {train} train / {test} test samples")]
    DegenerateSplit { train: usize, test: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("length mismatch: {actual} actual vs {predicted} predicted values")]
    LengthMismatch { actual: usize, predicted: usize },

    #[error("actual values are constant, R² is undefined")]
    ConstantActual,

    #[error("experimental reference value is zero")]
    ZeroReference,

    #[error("model file format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
