//! Semi-decentralized arranger: one sequencer batches requests, a data
//! availability committee (DAC) checks and signs batch tags and later
//! translates them back into batches.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use crate::codec::{Reader, Writer};
use crate::config::BatchPolicy;
use crate::crypto::{aggregate, hash_batch, sha256, sign, verify, Digest, KeyPair, Pki, Signature};
use crate::error::{AddError, DecodeError};
use crate::types::{
    decode_batch, encode_batch, validate, Batch, BatchTag, CertifiedBatchTag, ClientDirectory,
    ReplicaId, TransactionRequest, Translation,
};

pub const WIRE_VERSION: u8 = 1;
const TAG_SIGN_REQ: u8 = 0x10;
const TAG_SIGN_RESP: u8 = 0x11;

/// `signReq(b, id, h)`: `version | 0x10 | id: u64 | h: [32] | batch: bytes`
/// where `batch` is the canonical batch encoding.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SignRequest {
    pub id: u64,
    pub hash: Digest,
    pub batch: Batch,
}

impl SignRequest {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION)
            .u8(TAG_SIGN_REQ)
            .u64(self.id)
            .digest(&self.hash)
            .bytes(&encode_batch(&self.batch));
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = header(bytes, TAG_SIGN_REQ)?;
        let id = r.u64()?;
        let hash = r.digest()?;
        let batch = decode_batch(r.bytes()?)?;
        r.finish()?;
        Ok(SignRequest { id, hash, batch })
    }
}

/// `signResp(id, h, signer, sig)`: `version | 0x11 | id: u64 | h: [32] |
/// signer: u16 | sig: bytes`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SignResponse {
    pub id: u64,
    pub hash: Digest,
    pub signer: ReplicaId,
    pub signature: Signature,
}

impl SignResponse {
    pub fn tag(&self) -> BatchTag {
        BatchTag::new(self.id, self.hash)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION)
            .u8(TAG_SIGN_RESP)
            .u64(self.id)
            .digest(&self.hash)
            .u16(self.signer.0)
            .bytes(&self.signature.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = header(bytes, TAG_SIGN_RESP)?;
        let id = r.u64()?;
        let hash = r.digest()?;
        let signer = ReplicaId(r.u16()?);
        let signature = Signature(r.bytes()?.to_vec());
        r.finish()?;
        Ok(SignResponse {
            id,
            hash,
            signer,
            signature,
        })
    }
}

pub(crate) fn header(bytes: &[u8], tag: u8) -> Result<Reader<'_>, DecodeError> {
    if bytes.is_empty() {
        return Err(DecodeError::Empty);
    }
    let mut r = Reader::new(bytes);
    let v = r.u8()?;
    if v != WIRE_VERSION {
        return Err(DecodeError::Version(v));
    }
    let t = r.u8()?;
    if t != tag {
        return Err(DecodeError::UnknownTag(t));
    }
    Ok(r)
}

/// Scripted sequencer behaviors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum SequencerBehavior {
    #[default]
    Honest,
    /// Acknowledges requests but never asks for signatures.
    Withhold,
    /// Sends sign requests whose hash does not match the batch.
    WrongHash,
    /// Acknowledges but silently leaves these requests out of every batch.
    Censor(BTreeSet<Digest>),
    /// Reuses identifier 0 for every batch.
    ReuseId,
}

impl SequencerBehavior {
    pub fn is_honest(&self) -> bool {
        *self == SequencerBehavior::Honest
    }
}

#[derive(Debug)]
struct Inflight {
    tag: BatchTag,
    /// Number of pending requests the batch snapshot covers.
    taken: usize,
    sigs: BTreeMap<ReplicaId, Signature>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SequencerOutput {
    /// Multicast to every DAC member.
    SignRequest(SignRequest),
    Post(CertifiedBatchTag),
}

#[derive(Debug)]
pub struct Sequencer {
    f: usize,
    policy: BatchPolicy,
    directory: Arc<ClientDirectory>,
    pki: Arc<Pki>,
    behavior: SequencerBehavior,
    all_txs: HashSet<Digest>,
    pending: Vec<TransactionRequest>,
    batch_id: u64,
    inflight: Option<Inflight>,
    last_post: u64,
}

impl Sequencer {
    pub fn new(
        f: usize,
        policy: BatchPolicy,
        directory: Arc<ClientDirectory>,
        pki: Arc<Pki>,
        behavior: SequencerBehavior,
    ) -> Self {
        Sequencer {
            f,
            policy,
            directory,
            pki,
            behavior,
            all_txs: HashSet::new(),
            pending: Vec::new(),
            batch_id: 0,
            inflight: None,
            last_post: 0,
        }
    }

    pub fn batch_id(&self) -> u64 {
        self.batch_id
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn has_inflight(&self) -> bool {
        self.inflight.is_some()
    }

    pub fn add(&mut self, tr: TransactionRequest) -> Result<(), AddError> {
        if !validate(&tr, &self.directory) {
            return Err(AddError::Invalid);
        }
        let d = tr.digest();
        if !self.all_txs.insert(d) {
            return Err(AddError::Duplicate);
        }
        match &self.behavior {
            SequencerBehavior::Censor(c) if c.contains(&d) => {}
            _ => self.pending.push(tr),
        }
        Ok(())
    }

    /// Fires `timetopost` when due.
    pub fn on_tick(&mut self, now: u64) -> Option<SequencerOutput> {
        if self.inflight.is_some()
            || self.pending.is_empty()
            || self.behavior == SequencerBehavior::Withhold
        {
            return None;
        }
        let full = self.pending.len() >= self.policy.max_pending;
        let timed_out = now >= self.last_post + self.policy.timeout_ticks;
        if !full && !timed_out {
            return None;
        }
        let taken = self.pending.len().min(self.policy.max_pending);
        let batch = Batch::new(self.batch_id, self.pending[..taken].to_vec());
        let mut hash = hash_batch(&batch).expect("pending is non-empty");
        if self.behavior == SequencerBehavior::WrongHash {
            hash = sha256(&[b"wrong", hash.as_bytes()]);
        }
        let tag = BatchTag::new(self.batch_id, hash);
        self.inflight = Some(Inflight {
            tag,
            taken,
            sigs: BTreeMap::new(),
        });
        Some(SequencerOutput::SignRequest(SignRequest {
            id: self.batch_id,
            hash,
            batch,
        }))
    }

    /// Collects one response; returns the certified tag once `f + 1` valid
    /// signatures are in.
    pub fn on_sign_response(&mut self, now: u64, resp: &SignResponse) -> Option<SequencerOutput> {
        let inflight = self.inflight.as_mut()?;
        if resp.tag() != inflight.tag {
            return None;
        }
        let pk = self.pki.get(resp.signer)?;
        if !verify(&inflight.tag, &resp.signature, pk) {
            return None;
        }
        inflight.sigs.insert(resp.signer, resp.signature.clone());
        if inflight.sigs.len() < self.f + 1 {
            return None;
        }
        let done = self.inflight.take().unwrap();
        let signature = aggregate(&done.sigs, self.pki.scheme()).ok()?;
        self.pending.drain(..done.taken);
        if self.behavior != SequencerBehavior::ReuseId {
            self.batch_id += 1;
        }
        self.last_post = now;
        Some(SequencerOutput::Post(CertifiedBatchTag {
            tag: done.tag,
            signature,
        }))
    }
}

/// Scripted DAC member behaviors. Silence is applied by the network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DacBehavior {
    #[default]
    Honest,
    /// Answers translations with a tampered batch.
    WrongTranslate,
}

#[derive(Debug)]
pub struct DacMember {
    id: ReplicaId,
    key: Arc<KeyPair>,
    behavior: DacBehavior,
    /// First-write-wins per identifier; entries are never removed.
    hashes: BTreeMap<u64, (Digest, Batch)>,
    amnesia: bool,
}

impl DacMember {
    pub fn new(id: ReplicaId, key: Arc<KeyPair>, behavior: DacBehavior) -> Self {
        DacMember {
            id,
            key,
            behavior,
            hashes: BTreeMap::new(),
            amnesia: false,
        }
    }

    /// Sabotage switch: signs but forgets every batch.
    pub fn with_amnesia(mut self) -> Self {
        self.amnesia = true;
        self
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn stored(&self) -> usize {
        self.hashes.len()
    }

    /// Signs `(id, h)` if `h` is the hash of `batch` and `id` is unused or
    /// already bound to `h`; ignores the request otherwise.
    pub fn on_sign_request(&mut self, req: &SignRequest) -> Option<SignResponse> {
        if req.batch.id != req.id || hash_batch(&req.batch).ok()? != req.hash {
            return None;
        }
        match self.hashes.get(&req.id) {
            Some((h, _)) if *h != req.hash => return None,
            Some(_) => {}
            None if !self.amnesia => {
                self.hashes.insert(req.id, (req.hash, req.batch.clone()));
            }
            None => {}
        }
        let tag = BatchTag::new(req.id, req.hash);
        Some(SignResponse {
            id: req.id,
            hash: req.hash,
            signer: self.id,
            signature: sign(&tag, &self.key),
        })
    }

    pub fn translate(&self, id: u64, h: &Digest) -> Translation {
        let t = match self.hashes.get(&id) {
            None => Translation::InvalidId,
            Some((stored, _)) if stored != h => Translation::InvalidHash,
            Some((_, b)) => Translation::Found(b.clone()),
        };
        match (self.behavior, t) {
            (DacBehavior::WrongTranslate, Translation::Found(b)) => Translation::Found(tamper(b)),
            (_, t) => t,
        }
    }
}

/// A batch that cannot hash like the original: the last request is dropped,
/// or its payload changed when it is the only one.
pub(crate) fn tamper(mut b: Batch) -> Batch {
    if b.txs.len() > 1 {
        b.txs.pop();
    } else if let Some(tx) = b.txs.first_mut() {
        tx.payload.push(0);
    }
    b
}
