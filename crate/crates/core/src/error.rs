use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("action index {index} out of range for agent {agent} (catalog size {size})")]
    InvalidAction {
        agent: usize,
        index: usize,
        size: usize,
    },

    #[error("flattened joint action width {width} exceeds the feasibility bound {bound}")]
    Infeasible { width: String, bound: u64 },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("{path}: record {record}: {message}")]
    Record {
        path: PathBuf,
        record: usize,
        message: String,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("environment spec hash mismatch: expected {expected}, found {found}")]
    SpecHash { expected: String, found: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("no checkpoint reaches {fraction} of the best reward {best}")]
    NoQualifyingCheckpoint { fraction: f64, best: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}
