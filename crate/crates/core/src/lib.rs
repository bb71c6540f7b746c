//! Arranger protocols for L2 rollups: a centralized sequencer with a data
//! availability committee, and a fully decentralized arranger built on set
//! Byzantine consensus, plus the simulated L1 logger and a deterministic
//! simulator that checks the arranger correctness properties.

pub mod clients;
pub mod codec;
pub mod config;
pub mod full;
pub mod crypto;
pub mod error;
pub mod logger;
pub mod sbc;
pub mod semi;
pub mod simnet;
pub mod types;

pub use config::{BatchPolicy, Mode, SystemConfig};
pub use crypto::{Digest, KeyPair, Pki, Scheme};
pub use error::{AddError, BatchError, ConfigError, CryptoError, DecodeError};
pub use logger::{Logger, LoggerView, PostOutcome, RejectReason};
pub use types::{
    decode_batch, encode_batch, tobatch, validate, Batch, BatchTag, CertifiedBatchTag, ClientDirectory,
    ClientId, ClientKey, ReplicaId, TransactionRequest, Translation,
};
