//! Bracha reliable broadcast for one (round, origin) proposal.

use std::collections::{BTreeMap, BTreeSet};

use super::ElementSet;
use crate::crypto::Digest;
use crate::types::ReplicaId;

#[derive(Clone, Copy, Debug)]
pub(crate) struct RbcThresholds {
    /// ECHOs needed before sending READY: more than (n + f) / 2.
    pub echo: usize,
    /// READYs that make a replica join with its own READY.
    pub amplify: usize,
    /// READYs needed to deliver.
    pub deliver: usize,
}

impl RbcThresholds {
    pub fn new(n: usize, f: usize) -> Self {
        RbcThresholds {
            echo: (n + f) / 2 + 1,
            amplify: f + 1,
            deliver: 2 * f + 1,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) enum RbcOut {
    Echo(ElementSet),
    Ready(Digest),
    Deliver(ElementSet),
}

#[derive(Debug, Default)]
pub(crate) struct RbcInstance {
    echoed: bool,
    readied: bool,
    delivered: bool,
    contents: BTreeMap<Digest, ElementSet>,
    echo_from: BTreeSet<ReplicaId>,
    ready_from: BTreeSet<ReplicaId>,
    echoes: BTreeMap<Digest, usize>,
    readies: BTreeMap<Digest, usize>,
}

impl RbcInstance {
    /// The origin's SEND. Only the first one counts.
    pub fn on_send(&mut self, set: ElementSet, th: RbcThresholds) -> Vec<RbcOut> {
        if self.echoed {
            return Vec::new();
        }
        self.echoed = true;
        self.contents.insert(set.content_digest(), set.clone());
        let mut out = vec![RbcOut::Echo(set)];
        out.extend(self.advance(th));
        out
    }

    pub fn on_echo(&mut self, from: ReplicaId, set: ElementSet, th: RbcThresholds) -> Vec<RbcOut> {
        if !self.echo_from.insert(from) {
            return Vec::new();
        }
        let d = set.content_digest();
        self.contents.entry(d).or_insert(set);
        *self.echoes.entry(d).or_default() += 1;
        self.advance(th)
    }

    pub fn on_ready(&mut self, from: ReplicaId, digest: Digest, th: RbcThresholds) -> Vec<RbcOut> {
        if !self.ready_from.insert(from) {
            return Vec::new();
        }
        *self.readies.entry(digest).or_default() += 1;
        self.advance(th)
    }

    fn advance(&mut self, th: RbcThresholds) -> Vec<RbcOut> {
        let mut out = Vec::new();
        if !self.readied {
            let by_echo = self.echoes.iter().find(|(_, &c)| c >= th.echo);
            let by_ready = self.readies.iter().find(|(_, &c)| c >= th.amplify);
            if let Some((d, _)) = by_echo.or(by_ready) {
                self.readied = true;
                out.push(RbcOut::Ready(*d));
            }
        }
        if !self.delivered {
            let ready = self
                .readies
                .iter()
                .find(|(d, &c)| c >= th.deliver && self.contents.contains_key(*d));
            if let Some((d, _)) = ready {
                self.delivered = true;
                out.push(RbcOut::Deliver(self.contents[d].clone()));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ClientId, ClientKey};

    fn set(n: u64) -> ElementSet {
        let k = ClientKey::from_seed(ClientId(1), [3; 32]);
        ElementSet::from_txs((0..n).map(|i| k.sign_request(i, vec![])))
    }

    #[test]
    fn delivers_after_quorums() {
        let th = RbcThresholds::new(4, 1);
        assert_eq!((th.echo, th.amplify, th.deliver), (3, 2, 3));
        let s = set(2);
        let d = s.content_digest();
        let mut inst = RbcInstance::default();
        assert_eq!(inst.on_send(s.clone(), th), vec![RbcOut::Echo(s.clone())]);
        assert!(inst.on_echo(ReplicaId(0), s.clone(), th).is_empty());
        assert!(inst.on_echo(ReplicaId(1), s.clone(), th).is_empty());
        assert_eq!(inst.on_echo(ReplicaId(2), s.clone(), th), vec![RbcOut::Ready(d)]);
        assert!(inst.on_ready(ReplicaId(0), d, th).is_empty());
        assert!(inst.on_ready(ReplicaId(1), d, th).is_empty());
        assert_eq!(inst.on_ready(ReplicaId(2), d, th), vec![RbcOut::Deliver(s)]);
        assert!(inst.delivered);
        assert!(inst.on_ready(ReplicaId(3), d, th).is_empty());
    }

    #[test]
    fn ready_amplification_and_late_content() {
        let th = RbcThresholds::new(4, 1);
        let s = set(1);
        let d = s.content_digest();
        let mut inst = RbcInstance::default();
        assert!(inst.on_ready(ReplicaId(0), d, th).is_empty());
        assert_eq!(inst.on_ready(ReplicaId(1), d, th), vec![RbcOut::Ready(d)]);
        // Quorum of READY without content: no delivery yet.
        assert!(inst.on_ready(ReplicaId(2), d, th).is_empty());
        assert_eq!(inst.on_echo(ReplicaId(3), s.clone(), th), vec![RbcOut::Deliver(s)]);
    }

    #[test]
    fn duplicate_votes_ignored() {
        let th = RbcThresholds::new(4, 1);
        let s = set(1);
        let mut inst = RbcInstance::default();
        for _ in 0..5 {
            inst.on_echo(ReplicaId(0), s.clone(), th);
        }
        assert_eq!(inst.echoes[&s.content_digest()], 1);
    }
}
