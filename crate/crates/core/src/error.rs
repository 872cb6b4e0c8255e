use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Io,
    Divergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("node {node} is isolated (degree 0); the normalized Laplacian is undefined")]
    IsolatedNode { node: usize },

    #[error("non-finite value encountered in {context}")]
    NumericOverflow { context: String },

    #[error("requested {requested} samples but only {available} are available")]
    CountTooLarge { requested: usize, available: usize },

    #[error("backward requires a 1x1 root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("{}parse error{}: {message}", path_prefix(.path), line_suffix(.line))]
    Parse {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },

    #[error("timestamps must strictly increase; violated at index {index} ({prev} then {found})")]
    NonMonotonicTimestamps { index: usize, prev: f64, found: f64 },

    #[error("snapshot sequence is empty")]
    EmptySequence,

    #[error("self-loop on node {node} at line {line}")]
    SelfLoop { node: usize, line: usize },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{field}`: {message}")]
    InvalidValue { field: String, message: String },

    #[error("all {0} trials diverged")]
    AllTrialsDiverged(usize),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

fn line_suffix(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } => ErrorCategory::Io,
            Error::NumericOverflow { .. } | Error::AllTrialsDiverged(_) => ErrorCategory::Divergence,
            _ => ErrorCategory::Validation,
        }
    }

    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidValue {
            field: field.into(),
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
