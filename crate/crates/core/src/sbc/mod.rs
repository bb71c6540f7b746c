//! Set Byzantine Consensus.
//!
//! Replicas submit elements with `add` and receive `SetDeliver(round, E)`
//! once round `round` decides `E`. Two engines share that contract:
//!
//! * [`ReferenceReplica`]: reliable broadcast of each replica's proposal
//!   followed by a rotating-coordinator, lock-based three-phase agreement
//!   (PROPOSE / ECHO / COMMIT) over the union of `n - f` delivered
//!   proposals, with view changes on local timeouts.
//! * [`OracleSbc`] + [`OracleClient`]: a trusted sequencer of sets that
//!   satisfies the SBC properties by construction, with optional sabotage
//!   modes that break one property on purpose.
//!
//! [`props`] checks the five SBC properties over recorded traces.

mod oracle;
pub mod props;
mod rbc;
mod reference;
pub mod wire;

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::crypto::{sha256, Digest};
use crate::types::{ReplicaId, TransactionRequest};

pub use oracle::{OracleClient, OracleDecision, OracleSabotage, OracleSbc};
pub use reference::{ReferenceReplica, SbcConfig, SbcFault};

/// One element of a set together with its request digest.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Element {
    pub digest: Digest,
    pub tx: TransactionRequest,
}

/// Immutable set of requests, kept sorted by digest without duplicates.
/// Cloning is cheap.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ElementSet(Arc<[Element]>);

impl ElementSet {
    pub fn empty() -> Self {
        ElementSet(Arc::from(Vec::new()))
    }

    pub fn from_txs<I: IntoIterator<Item = TransactionRequest>>(txs: I) -> Self {
        let mut v: Vec<Element> = txs
            .into_iter()
            .map(|tx| Element {
                digest: tx.digest(),
                tx,
            })
            .collect();
        v.sort_by_key(|e| e.digest);
        v.dedup_by(|a, b| a.digest == b.digest);
        ElementSet(Arc::from(v))
    }

    /// Builds from elements already known to be sorted and unique.
    pub(crate) fn from_sorted(v: Vec<Element>) -> Self {
        debug_assert!(v.windows(2).all(|w| w[0].digest < w[1].digest));
        ElementSet(Arc::from(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Element> {
        self.0.iter()
    }

    pub fn txs(&self) -> impl Iterator<Item = &TransactionRequest> {
        self.0.iter().map(|e| &e.tx)
    }

    pub fn digests(&self) -> impl Iterator<Item = Digest> + '_ {
        self.0.iter().map(|e| e.digest)
    }

    pub fn contains(&self, d: &Digest) -> bool {
        self.0.binary_search_by(|e| e.digest.cmp(d)).is_ok()
    }

    /// Hash identifying the set's content.
    pub fn content_digest(&self) -> Digest {
        let mut parts: Vec<&[u8]> = Vec::with_capacity(self.0.len() + 1);
        parts.push(b"sbc/set");
        for e in self.0.iter() {
            parts.push(e.digest.as_bytes());
        }
        sha256(&parts)
    }

    pub fn without(&self, drop: &BTreeSet<Digest>) -> ElementSet {
        ElementSet::from_sorted(
            self.0
                .iter()
                .filter(|e| !drop.contains(&e.digest))
                .cloned()
                .collect(),
        )
    }
}

/// A coordinator's proposal: the union of the delivered proposals of
/// `members`, after dropping invalid and already decided elements.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SetValue {
    pub members: Vec<ReplicaId>,
    pub elements: ElementSet,
}

impl SetValue {
    pub fn id(&self) -> Digest {
        let mut members = Vec::with_capacity(self.members.len() * 2);
        for m in &self.members {
            members.extend_from_slice(&m.0.to_be_bytes());
        }
        sha256(&[
            b"sbc/value",
            &(self.members.len() as u32).to_be_bytes(),
            &members,
            self.elements.content_digest().as_bytes(),
        ])
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SbcMessage {
    /// Reliable-broadcast initial send of the origin's proposal.
    RbcSend { round: u64, set: ElementSet },
    RbcEcho {
        round: u64,
        origin: ReplicaId,
        set: ElementSet,
    },
    RbcReady {
        round: u64,
        origin: ReplicaId,
        digest: Digest,
    },
    Propose {
        round: u64,
        view: u32,
        value: SetValue,
        /// View in which `value` previously gathered an ECHO quorum.
        valid_view: Option<u32>,
    },
    /// First vote. `None` votes for no value.
    Echo {
        round: u64,
        view: u32,
        value: Option<Digest>,
    },
    /// Second vote, carrying the value so late replicas can decide.
    Commit {
        round: u64,
        view: u32,
        value: Option<SetValue>,
    },
    ViewChange { round: u64, view: u32 },
    /// Oracle engine: decided set for `round`.
    Decided { round: u64, set: ElementSet },
}

impl SbcMessage {
    pub fn round(&self) -> u64 {
        match self {
            SbcMessage::RbcSend { round, .. }
            | SbcMessage::RbcEcho { round, .. }
            | SbcMessage::RbcReady { round, .. }
            | SbcMessage::Propose { round, .. }
            | SbcMessage::Echo { round, .. }
            | SbcMessage::Commit { round, .. }
            | SbcMessage::ViewChange { round, .. }
            | SbcMessage::Decided { round, .. } => *round,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SbcMessage::RbcSend { .. } => "RBC-SEND",
            SbcMessage::RbcEcho { .. } => "RBC-ECHO",
            SbcMessage::RbcReady { .. } => "RBC-READY",
            SbcMessage::Propose { .. } => "PROPOSE",
            SbcMessage::Echo { .. } => "ECHO",
            SbcMessage::Commit { .. } => "COMMIT",
            SbcMessage::ViewChange { .. } => "VIEWCHANGE",
            SbcMessage::Decided { .. } => "DECIDED",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum SbcAction {
    Broadcast(SbcMessage),
    Send(ReplicaId, SbcMessage),
    /// Oracle engine: forward an element to the oracle service.
    ToOracle(TransactionRequest),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SetDeliver {
    pub round: u64,
    pub set: ElementSet,
}

/// Everything one input produced.
#[derive(Debug, Default)]
pub struct SbcStep {
    pub actions: Vec<SbcAction>,
    pub delivered: Vec<SetDeliver>,
    /// Proposals this replica broadcast, per round.
    pub proposed: Vec<(u64, ElementSet)>,
}

impl SbcStep {
    pub fn merge(&mut self, other: SbcStep) {
        self.actions.extend(other.actions);
        self.delivered.extend(other.delivered);
        self.proposed.extend(other.proposed);
    }
}

/// An SBC endpoint embedded in an arranger replica.
#[derive(Debug)]
pub enum SbcNode {
    Reference(Box<ReferenceReplica>),
    Oracle(OracleClient),
}

impl SbcNode {
    /// Returns whether `e` was taken (valid and not yet decided).
    pub fn add(&mut self, now: u64, e: TransactionRequest) -> (bool, SbcStep) {
        match self {
            SbcNode::Reference(r) => r.add(now, e),
            SbcNode::Oracle(o) => o.add(e),
        }
    }

    pub fn on_message(&mut self, now: u64, from: ReplicaId, msg: SbcMessage) -> SbcStep {
        match self {
            SbcNode::Reference(r) => r.on_message(now, from, msg),
            SbcNode::Oracle(o) => o.on_message(msg),
        }
    }

    /// Oracle decisions arrive from the oracle service, not a replica.
    pub fn on_oracle(&mut self, msg: SbcMessage) -> SbcStep {
        match self {
            SbcNode::Reference(_) => SbcStep::default(),
            SbcNode::Oracle(o) => o.on_message(msg),
        }
    }

    pub fn on_tick(&mut self, now: u64) -> SbcStep {
        match self {
            SbcNode::Reference(r) => r.on_tick(now),
            SbcNode::Oracle(_) => SbcStep::default(),
        }
    }

    pub fn is_decided(&self, d: &Digest) -> bool {
        match self {
            SbcNode::Reference(r) => r.is_decided(d),
            SbcNode::Oracle(o) => o.is_decided(d),
        }
    }

    /// True when nothing is pending locally and no round is in progress.
    pub fn is_idle(&self) -> bool {
        match self {
            SbcNode::Reference(r) => r.is_idle(),
            SbcNode::Oracle(o) => o.is_idle(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ClientId, ClientKey};

    #[test]
    fn element_set_sorted_and_unique() {
        let k = ClientKey::from_seed(ClientId(1), [1; 32]);
        let a = k.sign_request(0, vec![]);
        let b = k.sign_request(1, vec![]);
        let s = ElementSet::from_txs([b.clone(), a.clone(), b.clone()]);
        assert_eq!(s.len(), 2);
        let ds: Vec<_> = s.digests().collect();
        assert!(ds[0] < ds[1]);
        assert!(s.contains(&a.digest()));
        let t = ElementSet::from_txs([a.clone(), b.clone()]);
        assert_eq!(s.content_digest(), t.content_digest());
        let only_b = s.without(&[a.digest()].into_iter().collect());
        assert_eq!(only_b.len(), 1);
        assert_ne!(only_b.content_digest(), s.content_digest());
    }
}
