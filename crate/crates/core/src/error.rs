use std::path::PathBuf;

use crate::channels::ChannelId;

/// Errors raised anywhere in the segmentation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("unknown label id {id} at pixel ({x}, {y})")]
    UnknownLabel { id: u8, x: usize, y: usize },

    #[error("image has no NIR plane")]
    MissingNir,

    #[error("channel {0} is not available")]
    MissingChannel(ChannelId),

    #[error("image {width}x{height} is smaller than the 32x32 minimum patch")]
    ImageTooSmall { width: usize, height: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("descriptor dimension {got} is below the projection dimension {needed}")]
    DimensionTooSmall { needed: usize, got: usize },

    #[error("training data contains fewer than two classes")]
    SingleClassData,

    #[error("vector dimension mismatch: expected {expected}, got {actual}")]
    VectorDimension { expected: usize, actual: usize },

    #[error("pixel ({x}, {y}) is not covered by any patch")]
    UncoveredPixel { x: usize, y: usize },

    #[error("operation requires indoor_background mode")]
    WrongMode,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pairwise term is not a metric")]
    NonMetricPairwise,

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("no ground-truth boundaries to build a trimap band")]
    EmptyBand,

    #[error("score lists differ in length ({0} vs {1}) or are shorter than 2")]
    LengthMismatch(usize, usize),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid model bundle: {0}")]
    Bundle(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Decode {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
