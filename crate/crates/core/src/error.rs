//! Error type shared by every module, with the process exit codes the CLI maps them to.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad arguments, inconsistent shapes, violated preconditions.
    #[error("usage: {0}")]
    Usage(String),

    /// Mismatched image/tensor dimensions between otherwise valid inputs.
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content; `detail` names the offending property/offset.
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// External refiner failure (spawn, timeout, bad response).
    #[error("refiner: {0}")]
    Refiner(String),

    /// Non-finite values, singular systems, degenerate geometry.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), detail: detail.into() }
    }

    /// Process exit code: 0 success, 2 usage error, 3 I/O error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Shape(_) => 2,
            Error::Io { .. } | Error::Format { .. } | Error::Refiner(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_cover_the_documented_contract() {
        assert_eq!(Error::Usage("x".into()).exit_code(), 2);
        assert_eq!(Error::Shape("x".into()).exit_code(), 2);
        assert_eq!(Error::io("/p", std::io::Error::other("x")).exit_code(), 3);
        assert_eq!(Error::format("/p", "bad magic").exit_code(), 3);
        assert_eq!(Error::Refiner("timeout".into()).exit_code(), 3);
        assert_eq!(Error::Numerical("nan".into()).exit_code(), 4);
    }
}
