//! Domain types shared by every protocol module: requests, batches, tags.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use ed25519_dalek::{Signature as EdSignature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::crypto::{sha256, AggregateSignature, Digest};
use crate::error::{BatchError, DecodeError};

/// Index of an arranger replica (or DAC member) in the PKI.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ReplicaId(pub u16);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Identifier of an L2 user; resolved to a verifying key via [`ClientDirectory`].
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClientId(pub u64);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A signed L2 transaction request.
///
/// Request identity is the SHA-256 of the canonical encoding (see
/// [`TransactionRequest::digest`]), never object identity.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct TransactionRequest {
    pub sender: ClientId,
    pub nonce: u64,
    pub payload: Vec<u8>,
    pub signature: Vec<u8>,
}

impl TransactionRequest {
    /// Bytes covered by the sender's signature.
    pub fn signing_bytes(sender: ClientId, nonce: u64, payload: &[u8]) -> Vec<u8> {
        let mut w = Writer::with_capacity(20 + payload.len());
        w.u64(sender.0).u64(nonce).bytes(payload);
        w.finish()
    }

    pub fn encoded_len(&self) -> usize {
        8 + 8 + 4 + self.payload.len() + 4 + self.signature.len()
    }

    pub fn encode_into(&self, w: &mut Writer) {
        w.u64(self.sender.0)
            .u64(self.nonce)
            .bytes(&self.payload)
            .bytes(&self.signature);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(self.encoded_len());
        self.encode_into(&mut w);
        w.finish()
    }

    pub fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(TransactionRequest {
            sender: ClientId(r.u64()?),
            nonce: r.u64()?,
            payload: r.bytes()?.to_vec(),
            signature: r.bytes()?.to_vec(),
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.is_empty() {
            return Err(DecodeError::Empty);
        }
        let mut r = Reader::new(bytes);
        let tr = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(tr)
    }

    pub fn digest(&self) -> Digest {
        sha256(&[&self.encode()])
    }
}

/// Signing key of one L2 user.
#[derive(Clone)]
pub struct ClientKey {
    id: ClientId,
    key: SigningKey,
}

impl ClientKey {
    pub fn from_seed(id: ClientId, seed: [u8; 32]) -> Self {
        ClientKey {
            id,
            key: SigningKey::from_bytes(&seed),
        }
    }

    pub fn id(&self) -> ClientId {
        self.id
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn sign_request(&self, nonce: u64, payload: Vec<u8>) -> TransactionRequest {
        let msg = TransactionRequest::signing_bytes(self.id, nonce, &payload);
        TransactionRequest {
            sender: self.id,
            nonce,
            payload,
            signature: self.key.sign(&msg).to_bytes().to_vec(),
        }
    }
}

impl fmt::Debug for ClientKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientKey").field("id", &self.id).finish()
    }
}

/// Public keys of every L2 user known to the arranger.
#[derive(Clone, Debug, Default)]
pub struct ClientDirectory {
    keys: BTreeMap<ClientId, VerifyingKey>,
}

impl ClientDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: ClientId, key: VerifyingKey) {
        self.keys.insert(id, key);
    }

    pub fn get(&self, id: ClientId) -> Option<&VerifyingKey> {
        self.keys.get(&id)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

impl FromIterator<(ClientId, VerifyingKey)> for ClientDirectory {
    fn from_iter<I: IntoIterator<Item = (ClientId, VerifyingKey)>>(iter: I) -> Self {
        ClientDirectory {
            keys: iter.into_iter().collect(),
        }
    }
}

/// True iff `tr` carries a valid signature by its claimed sender.
/// Unknown senders and malformed signatures yield `false`.
pub fn validate(tr: &TransactionRequest, directory: &ClientDirectory) -> bool {
    let Some(key) = directory.get(tr.sender) else {
        return false;
    };
    let Ok(sig_bytes) = <[u8; 64]>::try_from(tr.signature.as_slice()) else {
        return false;
    };
    let sig = EdSignature::from_bytes(&sig_bytes);
    let msg = TransactionRequest::signing_bytes(tr.sender, tr.nonce, &tr.payload);
    key.verify(&msg, &sig).is_ok()
}

/// An ordered sequence of requests with its identifier.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Batch {
    pub id: u64,
    pub txs: Vec<TransactionRequest>,
}

impl Batch {
    pub fn new(id: u64, txs: Vec<TransactionRequest>) -> Self {
        Batch { id, txs }
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn digests(&self) -> impl Iterator<Item = Digest> + '_ {
        self.txs.iter().map(TransactionRequest::digest)
    }
}

/// Layout: `id: u64 | count: u32 | count × (len: u32 | request)` where each
/// request is `sender: u64 | nonce: u64 | payload: bytes | signature: bytes`.
pub fn encode_batch(b: &Batch) -> Vec<u8> {
    let body: usize = b.txs.iter().map(|t| 4 + t.encoded_len()).sum();
    let mut w = Writer::with_capacity(12 + body);
    w.u64(b.id).u32(b.txs.len() as u32);
    for tx in &b.txs {
        w.u32(tx.encoded_len() as u32);
        tx.encode_into(&mut w);
    }
    w.finish()
}

pub fn decode_batch(bytes: &[u8]) -> Result<Batch, DecodeError> {
    if bytes.is_empty() {
        return Err(DecodeError::Empty);
    }
    let mut r = Reader::new(bytes);
    let id = r.u64()?;
    let count = r.u32()? as usize;
    // Each record needs at least its 4-byte length prefix.
    if count > r.remaining() / 4 {
        return Err(DecodeError::Malformed(format!(
            "batch claims {count} requests in {} bytes",
            r.remaining()
        )));
    }
    let mut txs = Vec::with_capacity(count);
    for _ in 0..count {
        let raw = r.bytes()?;
        let mut inner = Reader::new(raw);
        let tx = TransactionRequest::decode_from(&mut inner)?;
        inner.finish()?;
        txs.push(tx);
    }
    r.finish()?;
    Ok(Batch { id, txs })
}

/// Packs the new elements of a decided set into a batch.
///
/// Elements already in `already_batched` are dropped, duplicates inside
/// `decided` collapse, and the survivors are sorted ascending by request
/// digest so every replica produces byte-identical batches.
pub fn tobatch<'a, I>(
    id: u64,
    decided: I,
    already_batched: &HashSet<Digest>,
) -> Result<Batch, BatchError>
where
    I: IntoIterator<Item = &'a TransactionRequest>,
{
    let mut fresh: BTreeMap<Digest, &TransactionRequest> = BTreeMap::new();
    let mut any = false;
    for tx in decided {
        any = true;
        let d = tx.digest();
        if !already_batched.contains(&d) {
            fresh.entry(d).or_insert(tx);
        }
    }
    if !any {
        return Err(BatchError::EmptyDecided);
    }
    if fresh.is_empty() {
        return Err(BatchError::AllDuplicates);
    }
    Ok(Batch {
        id,
        txs: fresh.into_values().cloned().collect(),
    })
}

/// `(id, hash)` pair committed to L1.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BatchTag {
    pub id: u64,
    pub hash: Digest,
}

impl BatchTag {
    pub fn new(id: u64, hash: Digest) -> Self {
        BatchTag { id, hash }
    }

    /// Signed message: `id: u64 big-endian | digest (32 bytes)`.
    pub fn signing_bytes(&self) -> [u8; 40] {
        let mut out = [0u8; 40];
        out[..8].copy_from_slice(&self.id.to_be_bytes());
        out[8..].copy_from_slice(self.hash.as_bytes());
        out
    }
}

impl fmt::Display for BatchTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.id, &self.hash.to_hex()[..12])
    }
}

/// A batch tag with a combined signature and the identity of each signer.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CertifiedBatchTag {
    pub tag: BatchTag,
    pub signature: AggregateSignature,
}

impl CertifiedBatchTag {
    pub fn signers(&self) -> &std::collections::BTreeSet<ReplicaId> {
        &self.signature.signers
    }

    /// Layout: `id: u64 | digest | signer count: u16 | signer ids: u16 each
    /// | aggregate: bytes`.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.tag.id).digest(&self.tag.hash);
        w.u16(self.signers().len() as u16);
        for s in self.signers() {
            w.u16(s.0);
        }
        w.bytes(&self.signature.bytes);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.is_empty() {
            return Err(DecodeError::Empty);
        }
        let mut r = Reader::new(bytes);
        let id = r.u64()?;
        let hash = r.digest()?;
        let count = r.u16()? as usize;
        let mut signers = std::collections::BTreeSet::new();
        for _ in 0..count {
            signers.insert(ReplicaId(r.u16()?));
        }
        let agg = r.bytes()?.to_vec();
        r.finish()?;
        Ok(CertifiedBatchTag {
            tag: BatchTag { id, hash },
            signature: AggregateSignature {
                bytes: agg,
                signers,
            },
        })
    }
}

/// Answer of `translate(id, h)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Translation {
    Found(Batch),
    /// No batch with this identifier.
    InvalidId,
    /// The identifier is known under a different hash.
    InvalidHash,
}

impl Translation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Translation::Found(_) => "found",
            Translation::InvalidId => "invalid-id",
            Translation::InvalidHash => "invalid-hash",
        }
    }
}
