use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("EmptyInput: no sentence found in input text")]
    EmptyInput,

    #[error("SchemaError at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("InvariantViolation: {0}")]
    InvariantViolation(String),

    #[error("MissingFeature: no provider covers k={k} for candidate {candidate}, size {size}")]
    MissingFeature { k: usize, candidate: usize, size: usize },

    #[error("IndexOutOfRange: index {index} not below {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("FormatError at row {row}, column {column}: {message}")]
    Format { row: usize, column: usize, message: String },

    #[error("ZeroVariance: pearson correlation undefined for constant input")]
    ZeroVariance,

    #[error("LengthMismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("NotEnoughCandidates: need {need}, have {have}")]
    NotEnoughCandidates { need: usize, have: usize },

    #[error("DomainError: {0}")]
    Domain(String),

    #[error("TooLarge: {evaluations} evaluations exceed the cap of {cap} ({placements} placements)")]
    TooLarge { evaluations: String, placements: String, cap: u64 },

    #[error("Infeasible: {0}")]
    Infeasible(String),

    #[error("SolverLimit: {0}")]
    SolverLimit(String),

    #[error("EncodingMismatch: {0}")]
    EncodingMismatch(String),

    #[error("EmptyResponses: {0}")]
    EmptyResponses(String),

    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
