use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("non-diagonal corner covariance (cxy = {cxy}) is not supported")]
    NonDiagonalCovariance { cxy: f64 },

    #[error("invalid label vector: {0}")]
    InvalidLabels(String),

    #[error("label vector length mismatch: expected {expected}, found {found}")]
    LabelLengthMismatch { expected: usize, found: usize },

    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),

    #[error("frame {frame_id}, {item} {index}: field `{field}`: {message}")]
    Schema {
        frame_id: u64,
        item: &'static str,
        index: usize,
        field: &'static str,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("frame id mismatch: {0}")]
    FrameMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corrupt cache entry (frame {frame_id}, source {source_name}): {message}")]
    CorruptCache {
        frame_id: u64,
        source_name: String,
        message: String,
    },

    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable tag for the CLI error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBox(_) => "invalid_box",
            Error::InvalidCovariance(_) => "invalid_covariance",
            Error::NonDiagonalCovariance { .. } => "non_diagonal_covariance",
            Error::InvalidLabels(_) => "invalid_labels",
            Error::LabelLengthMismatch { .. } => "label_length_mismatch",
            Error::InvalidGroundTruth(_) => "invalid_ground_truth",
            Error::Schema { .. } => "schema",
            Error::Format { .. } => "format",
            Error::FrameMismatch(_) => "frame_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::CorruptCache { .. } => "corrupt_cache",
            Error::InFile { source, .. } => source.kind(),
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::InFile { .. } | Error::Io { .. } | Error::Format { .. }) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
