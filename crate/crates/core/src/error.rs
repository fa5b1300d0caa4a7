use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The ball would cross both opposing walls within a single step.
    #[error("unrecoverable ball state: displacement {displacement} m exceeds domain width {width} m")]
    UnrecoverableState { displacement: f64, width: f64 },

    #[error("unsupported format in {path}: expected {expected}, found {found}")]
    UnsupportedFormat {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("truncated file {path}: needed {needed} bytes, {available} available")]
    Truncated {
        path: PathBuf,
        needed: u64,
        available: u64,
    },

    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<u64>,
        found: Vec<u64>,
    },

    #[error("sequence too short: {frames} frames, at least 3 required")]
    SequenceTooShort { frames: usize },

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("incomplete design for metric {metric}: missing (config, replicate) cells {cells:?}")]
    MissingCells {
        metric: String,
        cells: Vec<(usize, usize)>,
    },

    #[error("missing metric {0}")]
    MissingMetric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("no dataset at {0} (expected a manifest.json written by `pitrack gen`)")]
    MissingDataset(PathBuf),

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
