//! Error types shared across the crate.

use thiserror::Error;

/// Errors from grid construction and per-frame processing.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),

    #[error("scan id {got} does not increase over {last}")]
    ScanOrder { last: u64, got: u64 },

    #[error("no odometry sample within {window_s} s of frame timestamp {frame_t}")]
    MissingOdometry { frame_t: f64, window_s: f64 },

    #[error("frame time delta must be positive and finite, got {0}")]
    InvalidDt(f64),

    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Errors from rigid-transform construction and application.
#[derive(Debug, Error)]
pub enum TransformError {
    #[error("time delta must be positive and finite, got {0}")]
    InvalidDt(f64),

    #[error("transform is not rigid: {0}")]
    NonRigid(String),
}

/// Errors from file parsing, writing, and scene specs.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("inconsistent schema in {path}: {msg}")]
    InconsistentSchema { path: String, msg: String },

    #[error("timestamps not strictly increasing at {path}:{line}")]
    NonMonotonicTimestamps { path: String, line: usize },

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("label/truth length mismatch: {labels} labels vs {truth} truth entries")]
    LengthMismatch { labels: usize, truth: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
