//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema violation in field `{field}`: {message}")]
    SchemaViolation { field: String, message: String },

    /// A mismatch draw produced a nonpositive component weight. The caller
    /// may re-seed; clamping would bias the error statistics.
    #[error("degenerate realization: component {index} drew nonpositive weight {value} under seed {seed}")]
    DegenerateRealization { index: usize, value: f64, seed: u64 },

    #[error("code {code} has no assembly in set `{set_id}`")]
    NoAssembly { code: u64, set_id: String },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("strategy {strategy} is not admissible for architecture {arch}")]
    StrategyMismatch { strategy: String, arch: String },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
