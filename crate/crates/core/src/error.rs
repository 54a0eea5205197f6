//! Crate-wide error type.

use thiserror::Error;

/// Errors raised while building, fitting, transforming or querying models.
#[derive(Debug, Error)]
pub enum Error {
    /// A record failed ingestion (all cells structurally missing, ragged row, ...).
    #[error("ingest error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    /// A sampling-zero path cannot be attached to the table.
    #[error("orphan sampling-zero path {path:?}: no connectable prefix")]
    OrphanZeroPath { path: Vec<String> },

    /// A model value violated a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A loaded file violated the JSON schema; `pointer` locates the offending value.
    #[error("schema violation at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    /// Evidence annihilates every root-to-sink path.
    #[error("contradictory evidence: {0}")]
    ContradictoryEvidence(String),

    /// Evidence referenced a node or edge absent from the graph.
    #[error("unknown {kind} in evidence: {name}")]
    UnknownReference { kind: &'static str, name: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(message: impl Into<String>) -> Self {
        Error::Validation(message.into())
    }

    pub fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
