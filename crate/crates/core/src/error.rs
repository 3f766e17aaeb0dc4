use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    PlyHeader {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: missing {kind} property `{name}`")]
    PlyMissingProperty {
        path: PathBuf,
        kind: &'static str,
        name: &'static str,
    },

    #[error("{path}: vertex {vertex}: {message}")]
    PlyPayload {
        path: PathBuf,
        vertex: usize,
        message: String,
    },

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("requested {requested} samples from {available} points")]
    TooManySamples { requested: usize, available: usize },

    #[error("degenerate patch: {0}")]
    DegeneratePatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("every patch was skipped; the reference has no patch with at least two points")]
    AllPatchesSkipped,

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs (files, parameters)
    /// rather than an internal invariant breach.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::NonFinite(_))
    }
}
