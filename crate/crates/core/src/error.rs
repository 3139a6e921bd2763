//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by signal, linear-algebra, labeling and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band: low {low_hz} Hz, high {high_hz} Hz at sample rate {sample_rate_hz} Hz")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        sample_rate_hz: f64,
    },
    #[error("invalid filter order: {order}")]
    InvalidOrder { order: usize },
    #[error("insufficient samples: got {got}, need at least {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("degenerate reference: need at least 2 channels, got {channels}")]
    DegenerateReference { channels: usize },
    #[error("invalid decimation factor: {factor}")]
    InvalidFactor { factor: usize },
    #[error("invalid threshold: {threshold}")]
    InvalidThreshold { threshold: f64 },
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("non-finite value encountered: {context}")]
    NonFinite { context: String },
    #[error("empty epoch set")]
    NoData,
    #[error("matrix is not symmetric: max asymmetry {asymmetry:e}")]
    SymmetryViolation { asymmetry: f64 },
    #[error("matrix has rank zero")]
    RankZero,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid regularization: {lambda}")]
    InvalidRegularization { lambda: f64 },
    #[error("invalid request: {context}")]
    InvalidRequest { context: String },
    #[error("degenerate ranking: need at least 2 sources, got {sources}")]
    DegenerateRanking { sources: usize },
    #[error("invalid size: {context}")]
    InvalidSize { context: String },
    #[error("source index {index} out of range for {sources} sources")]
    InvalidIndex { index: usize, sources: usize },
    #[error("invalid noise level: xi = {xi}, must lie in [0, 1)")]
    InvalidNoise { xi: f64 },
    #[error("degenerate labels: zero variance")]
    DegenerateLabels,
    #[error("undefined correlation: {context}")]
    UndefinedCorrelation { context: String },
    #[error("invalid pattern: {context}")]
    InvalidPattern { context: String },
    #[error("insufficient data: {got} epochs for {needed} folds")]
    InsufficientData { got: usize, needed: usize },
    #[error("invalid config: {context}")]
    InvalidConfig { context: String },
    #[error("invalid marginalization dimension: {dimension}")]
    InvalidDimension { dimension: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("file format error: {context}")]
    FileFormat { context: String },
}

pub type Result<T> = std::result::Result<T, Error>;
