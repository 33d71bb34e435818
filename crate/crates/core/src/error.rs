use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label} at node {node} is outside 0..{k}")]
    LabelOutOfRange { node: usize, label: usize, k: usize },

    #[error("labeling has {got} entries but the graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("node {node} is out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("node {0} was already explored")]
    AlreadyExplored(usize),

    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(usize, usize),

    #[error("self-loop at node {0} is not allowed by this graph's convention")]
    SelfLoopForbidden(usize),

    #[error("dimension mismatch: expected {expected}x{expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("edge probability matrix is invalid: {0}")]
    InvalidProbabilities(String),

    #[error("invalid prior: alpha and beta must be positive (got {alpha}, {beta})")]
    InvalidPrior { alpha: f64, beta: f64 },

    #[error("invalid chain configuration: {0}")]
    InvalidChainConfig(String),

    #[error("every node has been explored")]
    EmptyFrontier,

    #[error("oracle failed on node {node}: {reason}")]
    Oracle { node: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
