//! Crate-wide error type.
//!
//! Every error carries enough context to print a one-line diagnostic, and
//! maps onto one of the stable CLI exit codes:
//!
//! * 1 — usage / configuration errors (bad flags, shape mismatches, unknown
//!   methods or classes)
//! * 2 — statistical or degenerate-data errors (all-zero differences,
//!   infeasible perplexity, non-finite losses)
//! * 3 — I/O and file-format errors (missing files, bad magic, truncated
//!   payloads)

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad CLI flags, config values, or API misuse.
    #[error("{0}")]
    Usage(String),

    /// Operand shapes that cannot be combined by the requested operation.
    #[error("{op}: incompatible shapes {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Statistical / degenerate-data conditions (empty eval sets, all-zero
    /// Wilcoxon differences, infeasible perplexity).
    #[error("{0}")]
    Stats(String),

    /// A non-finite value surfaced during training or optimization.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Malformed file contents (embedding lines, IDX/CIFAR records,
    /// checkpoints, manifests).
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn stats(msg: impl Into<String>) -> Self {
        Error::Stats(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Shape { .. } => 1,
            Error::Stats(_) | Error::NonFinite { .. } => 2,
            Error::Format { .. } | Error::Io { .. } => 3,
        }
    }
}
