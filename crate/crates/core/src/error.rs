use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column {column} has {found} layer tops, expected {expected}")]
    ColumnCountMismatch {
        column: usize,
        expected: usize,
        found: usize,
    },

    #[error("column {column} contains no layer tops")]
    EmptyColumn { column: usize },

    #[error("layer tops are not strictly increasing at layer {layer}, column {column} ({upper} then {lower})")]
    NonMonotonicTops {
        layer: usize,
        column: usize,
        upper: u32,
        lower: u32,
    },

    #[error("record {segment_id} has {found} layer tops, at least {required} are required")]
    InsufficientLayers {
        segment_id: String,
        found: usize,
        required: usize,
    },

    #[error("feature channel {channel} has zero variance")]
    DegenerateChannel { channel: usize },

    #[error("adjacency matrix has no positive weights")]
    ZeroGraph,

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("training diverged at epoch {epoch}, sample {sample}: loss = {loss}")]
    DivergedTraining {
        epoch: usize,
        sample: usize,
        loss: f64,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    #[error("image decode failed for {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plotting failed: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::DivergedTraining { .. } | Error::RawIo(_) | Error::Plot(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
