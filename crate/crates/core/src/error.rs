use std::path::PathBuf;

use thiserror::Error;

/// Failures while decoding one of the binary containers (TDCF, TDCP, TDCS).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic at byte {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: [u8; 4],
        found: Vec<u8>,
    },
    #[error("unsupported version {found} at byte {offset} (expected {expected})")]
    VersionMismatch {
        offset: usize,
        expected: u32,
        found: u32,
    },
    #[error("truncated payload at byte {offset}: needed {needed} more bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid field at byte {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
}

impl FormatError {
    pub fn offset(&self) -> usize {
        match self {
            FormatError::BadMagic { offset, .. }
            | FormatError::VersionMismatch { offset, .. }
            | FormatError::Truncated { offset, .. }
            | FormatError::Invalid { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Error)]
pub enum TdcError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("orchestration error: {0}")]
    Orchestration(String),
}

impl TdcError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TdcError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        TdcError::Format {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = TdcError> = std::result::Result<T, E>;
