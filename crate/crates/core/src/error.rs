use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate two-asset structure: misspecified loadings coincide ({0})")]
    DegenerateStructure(f64),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("degenerate constraints: signal is proportional to the budget vector")]
    DegenerateConstraints,

    #[error("covariance is not usable: {0}")]
    Covariance(String),

    #[error("no V^-1-orthogonal complement exists for dimension {0}")]
    NoComplement(usize),

    #[error("every frontier target was degenerate ({0} skipped)")]
    EmptyFrontier(usize),

    #[error("frontier has {0} points, need at least 3")]
    InsufficientPoints(usize),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("every return row was dropped during cleaning")]
    EmptyReturns,

    #[error("size error: {0}")]
    Size(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("nothing to plot: {0}")]
    NoData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
