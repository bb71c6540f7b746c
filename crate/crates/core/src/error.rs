use thiserror::Error;

/// Failure to parse a canonical byte encoding or text record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("empty input")]
    Empty,
    #[error("truncated input: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("unknown record tag {0:#04x}")]
    UnknownTag(u8),
    #[error("unsupported encoding version {0}")]
    Version(u8),
    #[error("invalid hex string {0:?}")]
    BadHex(String),
    #[error("malformed record: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("empty input")]
    EmptyInput,
    #[error("empty signer set")]
    EmptySignerSet,
    #[error("corrupt compressed stream")]
    CorruptStream,
    #[error("key material rejected: {0}")]
    BadKey(String),
    #[error("proof of possession does not verify")]
    BadProofOfPossession,
    #[error("signature scheme mismatch")]
    SchemeMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BatchError {
    /// Every element of the decided set was already part of an earlier batch.
    #[error("all elements already batched")]
    AllDuplicates,
    #[error("decided set is empty")]
    EmptyDecided,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("replica count must be positive")]
    NoReplicas,
    #[error("full mode requires f < n/3 (n={n}, f={f})")]
    FullResilience { n: usize, f: usize },
    #[error("semi mode requires f < n/2 unless honest-minority mode is enabled (n={n}, f={f})")]
    SemiResilience { n: usize, f: usize },
    #[error("f={f} must be smaller than n={n}")]
    TooManyFaults { n: usize, f: usize },
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

/// Why a replica or sequencer refused a submitted request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum AddError {
    #[error("request signature does not verify")]
    Invalid,
    #[error("request already submitted")]
    Duplicate,
}

impl AddError {
    pub fn as_str(self) -> &'static str {
        match self {
            AddError::Invalid => "invalid",
            AddError::Duplicate => "duplicate",
        }
    }
}
