//! Batch hashing, tag signatures and batch compression.

mod compress;
mod hash;
mod merkle;
mod sig;

pub use compress::{compress, decompress, Brotli, Codec, CompressedBatch, Identity};
pub use hash::{sha256, Digest, DIGEST_LEN};
pub use merkle::{hash_batch, leaf_hash, merkle_root, node_hash, LEAF_TAG, NODE_TAG};
pub use sig::{
    aggregate, sign, verify, verify_aggregate, AggregateSignature, KeyPair, Pki, PublicKey,
    Scheme, Signature,
};
