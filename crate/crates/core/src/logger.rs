//! The L1 `logger` contract and the chain that feeds it.
//!
//! The contract keeps an append-only map from batch id to the first
//! certified tag posted for it. The [`Chain`] in front of it models L1
//! inclusion: posts may be delayed and reordered, never dropped.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::sync::Arc;

use crate::crypto::{verify_aggregate, Pki};
use crate::types::{CertifiedBatchTag, ReplicaId};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum RejectReason {
    BadSignature,
    TooFewSigners,
    DuplicateId,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::BadSignature => "bad-signature",
            RejectReason::TooFewSigners => "too-few-signers",
            RejectReason::DuplicateId => "duplicate-id",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bad-signature" => Some(RejectReason::BadSignature),
            "too-few-signers" => Some(RejectReason::TooFewSigners),
            "duplicate-id" => Some(RejectReason::DuplicateId),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum PostOutcome {
    Accepted,
    Rejected(RejectReason),
}

impl PostOutcome {
    pub fn is_accepted(self) -> bool {
        matches!(self, PostOutcome::Accepted)
    }
}

impl fmt::Display for PostOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostOutcome::Accepted => f.write_str("accepted"),
            PostOutcome::Rejected(r) => f.write_str(r.as_str()),
        }
    }
}

/// One processed post, in processing order.
#[derive(Clone, Debug)]
pub struct PostRecord {
    pub tick: u64,
    pub outcome: PostOutcome,
    pub tag: CertifiedBatchTag,
}

/// Read access used by replicas computing the next batch to post.
pub trait LoggerView {
    fn max_contiguous(&self) -> u64;
    fn get(&self, id: u64) -> Option<&CertifiedBatchTag>;
}

#[derive(Clone, Debug)]
pub struct Logger {
    pki: Arc<Pki>,
    f: usize,
    accepted: BTreeMap<u64, CertifiedBatchTag>,
    next_gap: u64,
    history: Vec<PostRecord>,
}

impl Logger {
    pub fn new(pki: Arc<Pki>, f: usize) -> Self {
        Logger {
            pki,
            f,
            accepted: BTreeMap::new(),
            next_gap: 0,
            history: Vec::new(),
        }
    }

    pub fn f(&self) -> usize {
        self.f
    }

    /// Applies the acceptance rule. State changes only on `Accepted`.
    pub fn post(&mut self, tag: CertifiedBatchTag) -> PostOutcome {
        self.post_at(0, tag)
    }

    pub fn post_at(&mut self, tick: u64, tag: CertifiedBatchTag) -> PostOutcome {
        let outcome = self.judge(&tag);
        if outcome.is_accepted() {
            self.accepted.insert(tag.tag.id, tag.clone());
            while self.accepted.contains_key(&self.next_gap) {
                self.next_gap += 1;
            }
        }
        self.history.push(PostRecord { tick, outcome, tag });
        outcome
    }

    fn judge(&self, tag: &CertifiedBatchTag) -> PostOutcome {
        if tag.signers().len() < self.f + 1 {
            return PostOutcome::Rejected(RejectReason::TooFewSigners);
        }
        if self.accepted.contains_key(&tag.tag.id) {
            return PostOutcome::Rejected(RejectReason::DuplicateId);
        }
        if !verify_aggregate(&tag.tag, &tag.signature, &self.pki) {
            return PostOutcome::Rejected(RejectReason::BadSignature);
        }
        PostOutcome::Accepted
    }

    pub fn accepted(&self) -> impl Iterator<Item = &CertifiedBatchTag> {
        self.accepted.values()
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }

    pub fn history(&self) -> &[PostRecord] {
        &self.history
    }

    /// CSV export: `tick,outcome,id,hash,signers` where `signers` is a
    /// bitmap string over replica indices (`1` = signed).
    pub fn history_csv(&self, n: usize) -> String {
        let mut out = String::from("tick,outcome,id,hash,signers\n");
        for rec in &self.history {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                rec.tick,
                rec.outcome,
                rec.tag.tag.id,
                rec.tag.tag.hash,
                signer_bitmap(rec.tag.signers().iter().copied(), n)
            ));
        }
        out
    }
}

impl LoggerView for Logger {
    fn max_contiguous(&self) -> u64 {
        self.next_gap
    }

    fn get(&self, id: u64) -> Option<&CertifiedBatchTag> {
        self.accepted.get(&id)
    }
}

pub fn signer_bitmap(signers: impl IntoIterator<Item = ReplicaId>, n: usize) -> String {
    let mut bits = vec![b'0'; n];
    for s in signers {
        if s.index() < n {
            bits[s.index()] = b'1';
        }
    }
    String::from_utf8(bits).unwrap()
}

/// Pending L1 transactions ordered by scheduled inclusion tick.
#[derive(Debug, Default)]
pub struct Chain {
    pending: BinaryHeap<Reverse<(u64, u64, PendingPost)>>,
    seq: u64,
}

#[derive(Debug, Clone)]
struct PendingPost(CertifiedBatchTag, String);

impl PartialEq for PendingPost {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}
impl Eq for PendingPost {}
impl PartialOrd for PendingPost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for PendingPost {
    fn cmp(&self, _: &Self) -> std::cmp::Ordering {
        std::cmp::Ordering::Equal
    }
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues `tag` for inclusion at `at`. `poster` is carried through for
    /// transcript purposes only.
    pub fn submit(&mut self, at: u64, tag: CertifiedBatchTag, poster: String) {
        self.seq += 1;
        self.pending
            .push(Reverse((at, self.seq, PendingPost(tag, poster))));
    }

    /// Removes every post due at or before `now`, in inclusion order.
    pub fn due(&mut self, now: u64) -> Vec<(CertifiedBatchTag, String)> {
        let mut out = Vec::new();
        while let Some(Reverse((at, _, _))) = self.pending.peek() {
            if *at > now {
                break;
            }
            let Reverse((_, _, PendingPost(tag, who))) = self.pending.pop().unwrap();
            out.push((tag, who));
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{aggregate, sha256, sign, KeyPair, Scheme};
    use crate::types::BatchTag;

    struct Fixture {
        keys: Vec<KeyPair>,
        pki: Arc<Pki>,
    }

    fn fixture(n: u16) -> Fixture {
        let keys: Vec<_> = (0..n)
            .map(|i| KeyPair::from_seed(Scheme::Bls, [i as u8 + 1; 32]))
            .collect();
        let pki = Pki::from_keypairs(
            Scheme::Bls,
            keys.iter().enumerate().map(|(i, k)| (ReplicaId(i as u16), k)),
        )
        .unwrap();
        Fixture {
            keys,
            pki: Arc::new(pki),
        }
    }

    fn certify(fx: &Fixture, tag: BatchTag, signers: &[u16]) -> CertifiedBatchTag {
        let sigs = signers
            .iter()
            .map(|&i| (ReplicaId(i), sign(&tag, &fx.keys[i as usize])))
            .collect();
        CertifiedBatchTag {
            tag,
            signature: aggregate(&sigs, Scheme::Bls).unwrap(),
        }
    }

    fn tag(id: u64) -> BatchTag {
        BatchTag::new(id, sha256(&[b"b", &id.to_be_bytes()]))
    }

    #[test]
    fn first_valid_tag_accepted() {
        let fx = fixture(4);
        let mut lg = Logger::new(fx.pki.clone(), 1);
        assert_eq!(lg.post(certify(&fx, tag(0), &[0, 1])), PostOutcome::Accepted);
        assert_eq!(lg.get(0).unwrap().tag, tag(0));
    }

    #[test]
    fn second_tag_same_id_rejected() {
        let fx = fixture(4);
        let mut lg = Logger::new(fx.pki.clone(), 1);
        let first = certify(&fx, tag(0), &[0, 1]);
        lg.post(first.clone());
        assert_eq!(
            lg.post(certify(&fx, tag(0), &[2, 3])),
            PostOutcome::Rejected(RejectReason::DuplicateId)
        );
        assert_eq!(lg.get(0), Some(&first));
    }

    #[test]
    fn f_signatures_not_enough() {
        let fx = fixture(7);
        let mut lg = Logger::new(fx.pki.clone(), 2);
        assert_eq!(
            lg.post(certify(&fx, tag(0), &[0, 1])),
            PostOutcome::Rejected(RejectReason::TooFewSigners)
        );
        assert_eq!(lg.accepted_count(), 0);
    }

    #[test]
    fn forged_signature_rejected() {
        let fx = fixture(4);
        let mut lg = Logger::new(fx.pki.clone(), 1);
        let mut forged = certify(&fx, tag(0), &[0, 1]);
        forged.tag = tag(5);
        assert_eq!(
            lg.post(forged),
            PostOutcome::Rejected(RejectReason::BadSignature)
        );
    }

    #[test]
    fn max_contiguous_is_smallest_gap() {
        let fx = fixture(4);
        let mut lg = Logger::new(fx.pki.clone(), 1);
        assert_eq!(lg.max_contiguous(), 0);
        for id in [0, 1, 3] {
            lg.post(certify(&fx, tag(id), &[0, 1]));
        }
        assert_eq!(lg.max_contiguous(), 2);
        let t3 = certify(&fx, tag(3), &[0, 1]);
        assert_eq!(lg.get(3), Some(&t3));
        lg.post(certify(&fx, tag(2), &[1, 2]));
        assert_eq!(lg.max_contiguous(), 4);
        assert_eq!(lg.get(9), None);
    }

    #[test]
    fn replay_is_deterministic() {
        let fx = fixture(4);
        let posts = vec![
            certify(&fx, tag(1), &[0, 1]),
            certify(&fx, tag(0), &[0]),
            certify(&fx, tag(0), &[2, 3]),
            certify(&fx, tag(1), &[1, 2]),
        ];
        let run = |posts: &[CertifiedBatchTag]| {
            let mut lg = Logger::new(fx.pki.clone(), 1);
            for p in posts {
                lg.post(p.clone());
            }
            lg.history_csv(4)
        };
        assert_eq!(run(&posts), run(&posts));
        assert!(run(&posts).contains(",too-few-signers,0,"));
    }

    #[test]
    fn chain_orders_by_tick_then_submission() {
        let fx = fixture(2);
        let mut chain = Chain::new();
        chain.submit(5, certify(&fx, tag(1), &[0]), "a".into());
        chain.submit(3, certify(&fx, tag(2), &[0]), "b".into());
        chain.submit(3, certify(&fx, tag(3), &[0]), "c".into());
        assert!(chain.due(2).is_empty());
        let due: Vec<_> = chain.due(4).into_iter().map(|(_, w)| w).collect();
        assert_eq!(due, vec!["b", "c"]);
        assert_eq!(chain.due(10).len(), 1);
        assert!(chain.is_empty());
    }

    #[test]
    fn bitmap() {
        assert_eq!(signer_bitmap([ReplicaId(0), ReplicaId(2)], 4), "1010");
    }
}
