use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no connected topology after {0} attempts")]
    RetriesExhausted(usize),

    #[error("task type {0} has no node with a positive service rate")]
    NoCapableNode(usize),

    #[error("sink {sink} is unreachable from node {node}")]
    UnreachableSink { node: usize, sink: usize },

    #[error("joint_lp requires single task type")]
    MultiType,

    #[error("lp infeasible at load {load}")]
    LpInfeasible { load: f64 },

    #[error("lp solver failed: {0}")]
    Numerical(String),

    #[error("instance mismatch: {0}")]
    Mismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
