use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: self-loop on node {node}")]
    SelfLoop {
        path: PathBuf,
        line: usize,
        node: u64,
    },

    #[error("{path}:{line}: node id {id} does not fit the id space (limit {limit})")]
    IdOverflow {
        path: PathBuf,
        line: usize,
        id: u64,
        limit: u64,
    },

    #[error("{what}: missing rows for nodes {}", format_nodes(.nodes))]
    MissingNodes { what: String, nodes: Vec<NodeId> },

    #[error("{what}: non-finite value at node {node}, column {column}")]
    NonFinite {
        what: String,
        node: NodeId,
        column: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid node id {node} (graph has {num_nodes} nodes)")]
    InvalidNode { node: NodeId, num_nodes: usize },

    #[error("node {0} is not a test node")]
    NotTestNode(NodeId),

    #[error("node {0} is not covered by the index")]
    NotIndexed(NodeId),

    #[error("node {node}: label {label} out of range for {num_classes} classes")]
    LabelOutOfRange {
        node: NodeId,
        label: u32,
        num_classes: u32,
    },

    #[error("node {0} has no true label")]
    MissingTrueLabel(NodeId),

    #[error("need at least {needed} points for clustering, got {available}")]
    TooFewPoints { needed: usize, available: usize },

    #[error("invalid parameter {name}: {message}")]
    InvalidParam { name: &'static str, message: String },

    #[error("predicate does not hold at node {0}")]
    PredicateFalse(NodeId),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("stale artifact {path}: {message}")]
    StaleArtifact { path: PathBuf, message: String },

    #[error("bad artifact {path}: {message}")]
    BadArtifact { path: PathBuf, message: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            message: message.into(),
        }
    }
}

fn format_nodes(nodes: &[NodeId]) -> String {
    const SHOWN: usize = 20;
    let mut out = nodes
        .iter()
        .take(SHOWN)
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if nodes.len() > SHOWN {
        out.push_str(&format!(" ... ({} total)", nodes.len()));
    }
    out
}
