use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Binary parse failure; `offset` is the byte where the problem starts.
    #[error("parse error at byte {offset}: {message}")]
    ParseByte { offset: u64, message: String },

    /// Text parse failure; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    ParseLine { line: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("infeasible billet: billet max radius {billet_max_r} mm is below target min radius {target_min_r} mm")]
    InfeasibleBillet { billet_max_r: f64, target_min_r: f64 },

    /// Every offending key, as `key: problem`.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
