use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("row {row} has zero norm; cosine distance is undefined")]
    ZeroVector { row: usize },

    #[error("reduction over an empty (fully masked) set")]
    EmptyReduction,

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    /// Every point lacks a same-class partner. `layer` is set when the batch came from a
    /// network layer.
    #[error("no point has a same-class partner{}", layer.map(|l| format!(" (layer {l})")).unwrap_or_default())]
    NoPositivePairs { layer: Option<usize> },

    #[error("cannot sample triplets: {0}")]
    InvalidSampling(String),

    #[error("{path}: parse error at byte offset {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
