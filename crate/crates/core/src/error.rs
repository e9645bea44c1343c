use std::path::PathBuf;

use thiserror::Error;

use crate::hawkes::EventStream;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error families, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Ingest,
    Numeric,
    Structural,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Config => 3,
            ErrorFamily::Ingest => 4,
            ErrorFamily::Numeric => 5,
            ErrorFamily::Structural => 6,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in `{field}`: {message}")]
    Domain { field: &'static str, message: String },

    #[error("evaluation error at event `{event}` (t = {time}): {message}")]
    Evaluation {
        event: String,
        time: f64,
        message: String,
    },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("simulation truncated after {} events (cap reached, process is likely supercritical)", .partial.len())]
    Truncated { partial: Box<EventStream> },

    #[error("fit diverged after {} epochs (likelihood became non-finite)", .trace.len())]
    FitDiverged { trace: Vec<f64> },

    #[error("training diverged at step {step}: {message}")]
    TrainingDiverged {
        step: usize,
        message: String,
        trace: Vec<[f64; 3]>,
    },

    #[error("non-finite value at node `{node}` during {stage}")]
    NonFinite { node: String, stage: &'static str },

    #[error("degenerate sentiment distribution: all intensities are zero on level {level} at t = {time}")]
    DegenerateDistribution { level: u32, time: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn domain(field: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Domain { .. } | Error::Config(_) => ErrorFamily::Config,
            Error::Ingest { .. } | Error::Io { .. } | Error::Format(_) => ErrorFamily::Ingest,
            Error::Evaluation { .. }
            | Error::Truncated { .. }
            | Error::FitDiverged { .. }
            | Error::TrainingDiverged { .. }
            | Error::NonFinite { .. }
            | Error::DegenerateDistribution { .. } => ErrorFamily::Numeric,
            Error::Structural(_) => ErrorFamily::Structural,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
