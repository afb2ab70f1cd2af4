use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid tile geometry: {0}")]
    Geometry(String),
    #[error("tile has not been calibrated")]
    Uncalibrated,
    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),
    #[error("zero attention normalizer at row {row}")]
    ZeroNormalizer { row: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("feature map mismatch between model and projection")]
    SpecMismatch,
    #[error("exact Gram matrix has zero Frobenius norm")]
    ZeroGram,
    #[error("linear system is not positive definite")]
    NotPositiveDefinite,
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub(crate) fn unknown(kind: &'static str, name: impl Into<String>) -> Self {
        Error::Unknown { kind, name: name.into() }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
