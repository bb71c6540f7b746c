use std::io;

use arranger_core::{CryptoError, DecodeError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid bench configuration: {0}")]
    Config(String),
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("{path}:{line}: {reason}")]
    Dictionary {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("no compressed batch for id {0}")]
    MissingBatch(u64),
    #[error("translate protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}
