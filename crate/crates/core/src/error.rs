use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum DmlError {
    #[error("matrix or vector contains non-finite entries")]
    NonFiniteInput,
    #[error("domain radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("triplet ({i}, {j}, {k}) is out of range for {n} points")]
    BadTriplet { i: usize, j: usize, k: usize, n: usize },
    #[error("mini-batch is empty")]
    EmptyBatch,
    #[error("class {class} has a single member and cannot anchor a triplet")]
    SingletonClass { class: usize },
    #[error("dataset needs at least two distinct classes")]
    DegenerateLabels,
    #[error("train fraction {0} leaves one side of the split empty")]
    BadFraction(f64),
    #[error("non-finite loss or gradient at iteration {iteration}")]
    NumericalDivergence { iteration: usize },
    #[error("gradient scale estimate is zero; every warmup gradient vanished")]
    DegenerateScale,
    #[error("iterate left the feasible domain at constraint {constraints_seen}")]
    DomainViolation { constraints_seen: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("rank {rank} is out of range (max {max})")]
    BadRank { rank: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DmlError {
    /// Stable identifier used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            DmlError::NonFiniteInput => "NonFiniteInput",
            DmlError::InvalidRadius(_) => "InvalidRadius",
            DmlError::DimMismatch { .. } => "DimMismatch",
            DmlError::BadTriplet { .. } => "BadTriplet",
            DmlError::EmptyBatch => "EmptyBatch",
            DmlError::SingletonClass { .. } => "SingletonClass",
            DmlError::DegenerateLabels => "DegenerateLabels",
            DmlError::BadFraction(_) => "BadFraction",
            DmlError::NumericalDivergence { .. } => "NumericalDivergence",
            DmlError::DegenerateScale => "DegenerateScale",
            DmlError::DomainViolation { .. } => "DomainViolation",
            DmlError::Parse { .. } => "ParseError",
            DmlError::EmptyDataset => "EmptyDataset",
            DmlError::BadRank { .. } => "BadRank",
            DmlError::InvalidConfig(_) => "InvalidConfig",
            DmlError::Io { .. } => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, DmlError>;
