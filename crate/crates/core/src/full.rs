//! Fully decentralized arranger replica: an SBC replica extended with batch
//! translation, tag-signature gossip and turn-based posting to the logger.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use crate::codec::Writer;
use crate::crypto::{
    aggregate, hash_batch, sha256, sign, verify, AggregateSignature, Digest, KeyPair, Pki, Scheme,
    Signature,
};
use crate::error::{AddError, BatchError, DecodeError};
use crate::logger::LoggerView;
use crate::sbc::{ElementSet, SbcAction, SbcMessage, SbcNode, SetDeliver};
use crate::semi::{header, tamper, WIRE_VERSION};
use crate::types::{
    tobatch, validate, Batch, BatchTag, CertifiedBatchTag, ClientDirectory, ReplicaId,
    TransactionRequest, Translation,
};

const TAG_SIGTAG: u8 = 0x20;

/// Signature gossip record: `version | 0x20 | round: u64 | digest: [32] |
/// signer: u16 | sig: bytes`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SigTag {
    pub tag: BatchTag,
    pub signer: ReplicaId,
    pub signature: Signature,
}

impl SigTag {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(WIRE_VERSION)
            .u8(TAG_SIGTAG)
            .u64(self.tag.id)
            .digest(&self.tag.hash)
            .u16(self.signer.0)
            .bytes(&self.signature.0);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = header(bytes, TAG_SIGTAG)?;
        let id = r.u64()?;
        let hash = r.digest()?;
        let signer = ReplicaId(r.u16()?);
        let signature = Signature(r.bytes()?.to_vec());
        r.finish()?;
        Ok(SigTag {
            tag: BatchTag::new(id, hash),
            signer,
            signature,
        })
    }
}

/// Scripted replica behaviors. Silence and SBC-level equivocation or
/// censorship are configured on the network and the embedded SBC node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FullBehavior {
    #[default]
    Honest,
    /// Signs a hash that does not match the decided batch.
    WrongHash,
    /// Floods the logger with tags it should reject.
    SpamPosts,
    /// Answers translations with a tampered batch.
    WrongTranslate,
    /// Gossips conflicting signatures: the real one to even replicas and
    /// one over a different hash to odd replicas.
    Equivocate,
    /// Sabotage: once batch 0 is accepted, signs and posts a second tag
    /// for identifier 0. Only meaningful with more than `f` colluders.
    ConflictPost,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FullAction {
    Sbc(SbcAction),
    Gossip(SigTag),
    GossipTo(ReplicaId, SigTag),
    Post(CertifiedBatchTag),
}

#[derive(Debug, Default)]
pub struct FullStep {
    pub actions: Vec<FullAction>,
    pub delivered: Vec<SetDeliver>,
    pub proposed: Vec<(u64, ElementSet)>,
    /// Tags this replica signed together with the batch it built.
    pub signed: Vec<(BatchTag, Batch)>,
}

impl FullStep {
    fn absorb_sbc(&mut self, step: crate::sbc::SbcStep) -> Vec<SetDeliver> {
        self.actions
            .extend(step.actions.into_iter().map(FullAction::Sbc));
        self.proposed.extend(step.proposed);
        step.delivered
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FullParams {
    pub n: usize,
    pub f: usize,
    pub turn_slice: u64,
    /// When false, `tobatch` ignores earlier batches (sabotage switch).
    pub dedup: bool,
    /// When true, built batches are never stored (sabotage switch).
    pub amnesia: bool,
}

impl FullParams {
    pub fn new(n: usize, f: usize, turn_slice: u64) -> Self {
        FullParams {
            n,
            f,
            turn_slice,
            dedup: true,
            amnesia: false,
        }
    }

    /// Owner of the time slice containing `now`.
    pub fn turn_owner(&self, now: u64) -> ReplicaId {
        ReplicaId(((now / self.turn_slice) % self.n as u64) as u16)
    }
}

#[derive(Debug)]
pub struct FullReplica {
    id: ReplicaId,
    params: FullParams,
    key: Arc<KeyPair>,
    pki: Arc<Pki>,
    directory: Arc<ClientDirectory>,
    behavior: FullBehavior,
    sbc: SbcNode,
    hashes: BTreeMap<u64, (Digest, Batch)>,
    signatures: BTreeMap<BatchTag, BTreeMap<ReplicaId, Signature>>,
    batched: HashSet<Digest>,
    last_posted: Option<(u64, u64)>,
    conflict_signed: bool,
    conflict_posted: bool,
    spammed_slice: Option<u64>,
}

impl FullReplica {
    pub fn new(
        id: ReplicaId,
        params: FullParams,
        key: Arc<KeyPair>,
        pki: Arc<Pki>,
        directory: Arc<ClientDirectory>,
        sbc: SbcNode,
        behavior: FullBehavior,
    ) -> Self {
        FullReplica {
            id,
            params,
            key,
            pki,
            directory,
            behavior,
            sbc,
            hashes: BTreeMap::new(),
            signatures: BTreeMap::new(),
            batched: HashSet::new(),
            last_posted: None,
            conflict_signed: false,
            conflict_posted: false,
            spammed_slice: None,
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn behavior(&self) -> FullBehavior {
        self.behavior
    }

    pub fn is_idle(&self) -> bool {
        self.sbc.is_idle()
    }

    pub fn batches(&self) -> usize {
        self.hashes.len()
    }

    pub fn signatures_for(&self, tag: &BatchTag) -> usize {
        self.signatures.get(tag).map_or(0, BTreeMap::len)
    }

    pub fn add(&mut self, now: u64, tr: TransactionRequest) -> (Result<(), AddError>, FullStep) {
        let mut step = FullStep::default();
        if !validate(&tr, &self.directory) {
            return (Err(AddError::Invalid), step);
        }
        let d = tr.digest();
        if self.batched.contains(&d) || self.sbc.is_decided(&d) {
            return (Err(AddError::Duplicate), step);
        }
        let (_, s) = self.sbc.add(now, tr);
        let delivered = step.absorb_sbc(s);
        self.process_delivered(delivered, &mut step);
        (Ok(()), step)
    }

    pub fn on_sbc_message(&mut self, now: u64, from: ReplicaId, msg: SbcMessage) -> FullStep {
        let mut step = FullStep::default();
        let s = self.sbc.on_message(now, from, msg);
        let delivered = step.absorb_sbc(s);
        self.process_delivered(delivered, &mut step);
        step
    }

    pub fn on_oracle(&mut self, msg: SbcMessage) -> FullStep {
        let mut step = FullStep::default();
        let s = self.sbc.on_oracle(msg);
        let delivered = step.absorb_sbc(s);
        self.process_delivered(delivered, &mut step);
        step
    }

    /// Stores `sig` iff it verifies under `sig.signer`'s key.
    pub fn on_sigtag(&mut self, sig: &SigTag) -> bool {
        let Some(pk) = self.pki.get(sig.signer) else {
            return false;
        };
        if !verify(&sig.tag, &sig.signature, pk) {
            return false;
        }
        self.signatures
            .entry(sig.tag)
            .or_default()
            .insert(sig.signer, sig.signature.clone());
        true
    }

    pub fn on_tick(&mut self, now: u64, logger: &dyn LoggerView) -> FullStep {
        let mut step = FullStep::default();
        let s = self.sbc.on_tick(now);
        let delivered = step.absorb_sbc(s);
        self.process_delivered(delivered, &mut step);

        match self.behavior {
            FullBehavior::SpamPosts => self.spam(now, logger, &mut step),
            FullBehavior::ConflictPost => self.conflict(logger, &mut step),
            _ => {}
        }
        if self.params.turn_owner(now) == self.id {
            self.my_turn(now, logger, &mut step);
        }
        step
    }

    fn process_delivered(&mut self, delivered: Vec<SetDeliver>, step: &mut FullStep) {
        for d in delivered {
            self.on_set_deliver(&d, step);
            step.delivered.push(d);
        }
    }

    fn on_set_deliver(&mut self, d: &SetDeliver, step: &mut FullStep) {
        let empty = HashSet::new();
        let seen = if self.params.dedup { &self.batched } else { &empty };
        let batch = match tobatch(d.round, d.set.txs(), seen) {
            Ok(b) => b,
            Err(BatchError::AllDuplicates) | Err(BatchError::EmptyDecided) => return,
        };
        let hash = hash_batch(&batch).expect("batch is non-empty");
        for tx in d.set.txs() {
            self.batched.insert(tx.digest());
        }
        let real = BatchTag::new(d.round, hash);
        let signed = match self.behavior {
            FullBehavior::WrongHash => BatchTag::new(d.round, sha256(&[b"wrong", hash.as_bytes()])),
            _ => real,
        };
        if !self.params.amnesia {
            self.hashes.insert(d.round, (hash, batch.clone()));
        }
        let sig = SigTag {
            tag: signed,
            signer: self.id,
            signature: sign(&signed, &self.key),
        };
        self.on_sigtag(&sig);
        if self.behavior == FullBehavior::Equivocate {
            let fake = BatchTag::new(d.round, sha256(&[b"equivocate", hash.as_bytes()]));
            let twin = SigTag {
                tag: fake,
                signer: self.id,
                signature: sign(&fake, &self.key),
            };
            for i in 0..self.params.n {
                let m = if i % 2 == 0 { sig.clone() } else { twin.clone() };
                step.actions.push(FullAction::GossipTo(ReplicaId(i as u16), m));
            }
        } else {
            step.actions.push(FullAction::Gossip(sig));
        }
        if signed == real {
            step.signed.push((real, batch));
        }
    }

    fn my_turn(&mut self, now: u64, logger: &dyn LoggerView, step: &mut FullStep) {
        let slice = now / self.params.turn_slice;
        let next = logger.max_contiguous();
        if self.last_posted == Some((slice, next)) {
            return;
        }
        let own = self.hashes.get(&next).map(|(h, _)| BatchTag::new(next, *h));
        let quorum = self.params.f + 1;
        let candidate = own
            .filter(|t| self.signatures_for(t) >= quorum)
            .or_else(|| {
                self.signatures
                    .range(BatchTag::new(next, Digest([0; 32]))..)
                    .take_while(|(t, _)| t.id == next)
                    .filter(|(_, s)| s.len() >= quorum)
                    .max_by_key(|(_, s)| s.len())
                    .map(|(t, _)| *t)
            });
        let Some(tag) = candidate else {
            return;
        };
        if let Some(cert) = self.certify(&tag) {
            self.last_posted = Some((slice, next));
            step.actions.push(FullAction::Post(cert));
        }
    }

    fn certify(&self, tag: &BatchTag) -> Option<CertifiedBatchTag> {
        let sigs: BTreeMap<ReplicaId, Signature> = self
            .signatures
            .get(tag)?
            .iter()
            .take(self.params.f + 1)
            .map(|(r, s)| (*r, s.clone()))
            .collect();
        let signature = aggregate(&sigs, self.pki.scheme()).ok()?;
        Some(CertifiedBatchTag { tag: *tag, signature })
    }

    /// One burst of invalid posts per slice: a tag signed only by this
    /// replica, a re-post of the last accepted tag, and a tag claiming
    /// `f + 1` signers with a garbage signature.
    fn spam(&mut self, now: u64, logger: &dyn LoggerView, step: &mut FullStep) {
        let slice = now / self.params.turn_slice;
        if self.spammed_slice == Some(slice) {
            return;
        }
        self.spammed_slice = Some(slice);
        let next = logger.max_contiguous();
        let fake = BatchTag::new(next, sha256(&[b"spam", &now.to_be_bytes()]));
        let own: BTreeMap<_, _> = [(self.id, sign(&fake, &self.key))].into();
        if let Ok(signature) = aggregate(&own, self.pki.scheme()) {
            step.actions.push(FullAction::Post(CertifiedBatchTag {
                tag: fake,
                signature,
            }));
        }
        if next > 0 {
            if let Some(prev) = logger.get(next - 1) {
                step.actions.push(FullAction::Post(prev.clone()));
            }
        }
        let signers: BTreeSet<ReplicaId> = (0..self.params.n as u16)
            .map(ReplicaId)
            .take(self.params.f + 1)
            .collect();
        let own_sig = sign(&fake, &self.key).0;
        let bytes = match self.pki.scheme() {
            Scheme::Bls => own_sig,
            Scheme::Ed25519 => own_sig.repeat(signers.len()),
        };
        step.actions.push(FullAction::Post(CertifiedBatchTag {
            tag: fake,
            signature: AggregateSignature { bytes, signers },
        }));
    }

    fn conflict(&mut self, logger: &dyn LoggerView, step: &mut FullStep) {
        let Some(first) = logger.get(0) else {
            return;
        };
        let fake = BatchTag::new(0, sha256(&[b"conflict", first.tag.hash.as_bytes()]));
        if !self.conflict_signed {
            self.conflict_signed = true;
            let sig = SigTag {
                tag: fake,
                signer: self.id,
                signature: sign(&fake, &self.key),
            };
            self.on_sigtag(&sig);
            step.actions.push(FullAction::Gossip(sig));
        }
        if !self.conflict_posted && self.signatures_for(&fake) > self.params.f {
            if let Some(cert) = self.certify(&fake) {
                self.conflict_posted = true;
                step.actions.push(FullAction::Post(cert));
            }
        }
    }

    pub fn translate(&self, id: u64, h: &Digest) -> Translation {
        let t = match self.hashes.get(&id) {
            None => Translation::InvalidId,
            Some((stored, _)) if stored != h => Translation::InvalidHash,
            Some((_, b)) => Translation::Found(b.clone()),
        };
        match (self.behavior, t) {
            (FullBehavior::WrongTranslate, Translation::Found(b)) => Translation::Found(tamper(b)),
            (_, t) => t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logger::Logger;
    use crate::sbc::{OracleClient, SbcMessage};
    use crate::types::{ClientId, ClientKey};

    struct Fx {
        client: ClientKey,
        replicas: Vec<FullReplica>,
        pki: Arc<Pki>,
    }

    fn fx(n: usize, f: usize, behaviors: &[FullBehavior]) -> Fx {
        let client = ClientKey::from_seed(ClientId(4), [4; 32]);
        let dir: Arc<ClientDirectory> =
            Arc::new([(client.id(), client.verifying_key())].into_iter().collect());
        let keys: Vec<_> = (0..n)
            .map(|i| Arc::new(KeyPair::from_seed(Scheme::Ed25519, [i as u8 + 40; 32])))
            .collect();
        let pki = Arc::new(
            Pki::from_keypairs(
                Scheme::Ed25519,
                keys.iter().enumerate().map(|(i, k)| (ReplicaId(i as u16), k.as_ref())),
            )
            .unwrap(),
        );
        let replicas = (0..n)
            .map(|i| {
                FullReplica::new(
                    ReplicaId(i as u16),
                    FullParams::new(n, f, 10),
                    keys[i].clone(),
                    pki.clone(),
                    dir.clone(),
                    SbcNode::Oracle(OracleClient::new(dir.clone())),
                    behaviors.get(i).copied().unwrap_or_default(),
                )
            })
            .collect();
        Fx {
            client,
            replicas,
            pki,
        }
    }

    fn deliver(fx: &mut Fx, round: u64, txs: &[TransactionRequest]) -> Vec<SigTag> {
        let set = ElementSet::from_txs(txs.iter().cloned());
        let mut gossip = Vec::new();
        for r in fx.replicas.iter_mut() {
            let step = r.on_oracle(SbcMessage::Decided {
                round,
                set: set.clone(),
            });
            for a in step.actions {
                if let FullAction::Gossip(s) = a {
                    gossip.push(s);
                }
            }
        }
        gossip
    }

    #[test]
    fn honest_replicas_sign_identical_tags() {
        let mut fx = fx(4, 1, &[]);
        let t = vec![fx.client.sign_request(0, vec![]), fx.client.sign_request(1, vec![])];
        let gossip = deliver(&mut fx, 0, &t);
        assert_eq!(gossip.len(), 4);
        assert!(gossip.iter().all(|g| g.tag == gossip[0].tag));
        let b = match fx.replicas[0].translate(0, &gossip[0].tag.hash) {
            Translation::Found(b) => b,
            other => panic!("{other:?}"),
        };
        assert_eq!(hash_batch(&b).unwrap(), gossip[0].tag.hash);
    }

    #[test]
    fn signatures_verified_and_idempotent() {
        let mut fx = fx(4, 1, &[]);
        let t = fx.client.sign_request(0, vec![]);
        let gossip = deliver(&mut fx, 0, &[t]);
        let r = &mut fx.replicas[0];
        assert!(r.on_sigtag(&gossip[1]));
        assert!(r.on_sigtag(&gossip[1]));
        assert_eq!(r.signatures_for(&gossip[1].tag), 2);
        let mut forged = gossip[2].clone();
        forged.signer = ReplicaId(3);
        assert!(!r.on_sigtag(&forged));
        assert_eq!(r.signatures_for(&gossip[1].tag), 2);
    }

    #[test]
    fn posts_on_turn_with_quorum_only() {
        let mut fx = fx(4, 1, &[]);
        let t = fx.client.sign_request(0, vec![]);
        let gossip = deliver(&mut fx, 0, &[t]);
        let mut logger = Logger::new(fx.pki.clone(), 1);
        // Replica 0 owns ticks 0..10 but holds only its own signature.
        let step = fx.replicas[0].on_tick(1, &logger);
        assert!(step.actions.is_empty());
        fx.replicas[0].on_sigtag(&gossip[1]);
        let step = fx.replicas[0].on_tick(2, &logger);
        let posts: Vec<_> = step
            .actions
            .iter()
            .filter_map(|a| match a {
                FullAction::Post(c) => Some(c.clone()),
                _ => None,
            })
            .collect();
        assert_eq!(posts.len(), 1);
        assert!(fx.replicas[0].on_tick(3, &logger).actions.is_empty());
        assert!(logger.post(posts[0].clone()).is_accepted());
        // Not replica 1's turn yet.
        assert!(fx.replicas[1].on_tick(5, &logger).actions.is_empty());
    }

    #[test]
    fn already_batched_set_not_signed() {
        let mut fx = fx(4, 1, &[]);
        let t = fx.client.sign_request(0, vec![]);
        deliver(&mut fx, 0, std::slice::from_ref(&t));
        assert!(deliver(&mut fx, 1, &[t]).is_empty());
    }

    #[test]
    fn add_rejections() {
        let mut fx = fx(4, 1, &[]);
        let t = fx.client.sign_request(0, vec![]);
        let mut bad = t.clone();
        bad.payload.push(1);
        assert_eq!(fx.replicas[0].add(0, bad).0, Err(AddError::Invalid));
        assert_eq!(fx.replicas[0].add(0, t.clone()).0, Ok(()));
        deliver(&mut fx, 0, std::slice::from_ref(&t));
        assert_eq!(fx.replicas[0].add(0, t).0, Err(AddError::Duplicate));
    }

    #[test]
    fn spam_is_rejected_by_logger() {
        let mut fx = fx(4, 1, &[FullBehavior::SpamPosts]);
        let mut logger = Logger::new(fx.pki.clone(), 1);
        let step = fx.replicas[0].on_tick(11, &logger);
        let mut n = 0;
        for a in step.actions {
            if let FullAction::Post(c) = a {
                n += 1;
                assert!(!logger.post(c).is_accepted());
            }
        }
        assert_eq!(n, 2);
    }

    #[test]
    fn sigtag_wire_roundtrip() {
        let fx = fx(1, 0, &[]);
        let tag = BatchTag::new(9, sha256(&[b"x"]));
        let s = SigTag {
            tag,
            signer: ReplicaId(0),
            signature: sign(&tag, &fx.replicas[0].key),
        };
        assert_eq!(SigTag::decode(&s.encode()).unwrap(), s);
    }
}
