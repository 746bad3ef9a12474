use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: line {line}: {message}")]
    Parse {
        context: &'static str,
        line: usize,
        message: String,
    },

    #[error("graph is not connected: node {0} is unreachable")]
    Disconnected(usize),

    #[error("edge {u}-{v} has non-positive or non-finite weight {weight}")]
    NonPositiveWeight { u: usize, v: usize, weight: f64 },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),

    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("instance start and destination are both {0}")]
    StartIsDestination(usize),

    #[error("brute-force oracle supports at most {max} mandatory nodes, got {got}")]
    TooManyMandatory { got: usize, max: usize },

    #[error("instance count for n = {0} overflows u128")]
    Overflow(usize),

    #[error("invalid root pair: {0}")]
    InvalidRootPair(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("graph fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported file format version {0}")]
    UnsupportedVersion(String),

    #[error("probes disagree on proved-optimal cost for instance {instance}: {reference} vs {neural}")]
    CostDisagreement {
        instance: usize,
        reference: f64,
        neural: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(context: &'static str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
