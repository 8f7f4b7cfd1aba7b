use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("index {index} out of range (length {len})")]
    OutOfBounds { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("{0} is undefined for zero-variance input")]
    Undefined(&'static str),

    #[error("trace exhausted at t={wall_clock:.3}s while downloading chunk {chunk}")]
    TraceExhausted { wall_clock: f64, chunk: usize, remaining_mbit: f64 },

    #[error("malformed session log: {0}")]
    MalformedLog(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("MPC horizon {0} exceeds the enumeration limit of 5")]
    HorizonTooLarge(usize),

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
