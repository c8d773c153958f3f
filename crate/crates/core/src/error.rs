// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ProbeError>;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing file {0}")]
    MissingBlob(PathBuf),

    #[error("blob {name} holds {actual} bytes but the manifest implies {expected}")]
    ShapeMismatch {
        name: String,
        expected: u64,
        actual: u64,
    },

    #[error("non-finite value in {what} at flat index {index}")]
    NonFinite { what: String, index: usize },

    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("ground-truth labels are required but absent")]
    MissingLabels,

    #[error("zero weight vector has no direction")]
    ZeroVector,

    #[error("power iteration stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("all {0} runs diverged")]
    AllDiverged(usize),

    #[error("the cosine objective needs a non-empty reference ensemble")]
    MissingReference,

    #[error("digest mismatch for {what}: expected {expected}, found {actual}")]
    DigestMismatch {
        what: String,
        expected: String,
        actual: String,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Divergence,
}

impl ProbeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ProbeError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        ProbeError::Validation(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            ProbeError::Io { .. } | ProbeError::MissingBlob(_) | ProbeError::Csv(_) => {
                ErrorKind::Io
            }
            ProbeError::Diverged { .. } | ProbeError::AllDiverged(_) => ErrorKind::Divergence,
            _ => ErrorKind::Validation,
        }
    }
}
