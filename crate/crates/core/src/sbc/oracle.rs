//! Property-enforcing SBC: one trusted service collects elements and hands
//! out decided sets to every replica.
//!
//! Each `period` ticks the service decides the union of its pending, valid,
//! undecided elements. Sabotage modes deliberately break one property so
//! that the property checkers can be shown to notice.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use super::{Element, ElementSet, SbcAction, SbcMessage, SbcStep, SetDeliver};
use crate::crypto::Digest;
use crate::types::{validate, ClientDirectory, ReplicaId, TransactionRequest};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OracleSabotage {
    #[default]
    None,
    /// Round 1 repeats an element already decided in round 0.
    DuplicateDecision,
    /// The first set with two or more elements reaches `target` without its
    /// last element, which is handed to `target` one round later.
    Disagree { target: ReplicaId },
    /// Round 0 carries an element whose signature does not verify.
    InvalidElement,
}

/// One decision of the oracle service.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleDecision {
    pub round: u64,
    /// What the oracle treated as proposed for this round.
    pub proposed: ElementSet,
    /// The set each replica receives.
    pub sets: BTreeMap<ReplicaId, ElementSet>,
}

#[derive(Debug)]
pub struct OracleSbc {
    n: usize,
    period: u64,
    directory: Arc<ClientDirectory>,
    sabotage: OracleSabotage,
    pending: BTreeMap<Digest, TransactionRequest>,
    decided: HashSet<Digest>,
    round: u64,
    last: u64,
    first_round: Vec<Element>,
    carry: Option<Element>,
    disagreed: bool,
}

impl OracleSbc {
    pub fn new(
        n: usize,
        period: u64,
        directory: Arc<ClientDirectory>,
        sabotage: OracleSabotage,
    ) -> Self {
        OracleSbc {
            n,
            period: period.max(1),
            directory,
            sabotage,
            pending: BTreeMap::new(),
            decided: HashSet::new(),
            round: 0,
            last: 0,
            first_round: Vec::new(),
            carry: None,
            disagreed: false,
        }
    }

    pub fn submit(&mut self, tx: TransactionRequest) {
        let d = tx.digest();
        if self.decided.contains(&d) || self.pending.contains_key(&d) {
            return;
        }
        if validate(&tx, &self.directory) {
            self.pending.insert(d, tx);
        }
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty() && self.carry.is_none()
    }

    pub fn rounds(&self) -> u64 {
        self.round
    }

    pub fn on_tick(&mut self, now: u64) -> Option<OracleDecision> {
        if now < self.last + self.period || self.pending.is_empty() {
            return None;
        }
        self.last = now;
        let round = self.round;
        let mut elems: BTreeMap<Digest, Element> = std::mem::take(&mut self.pending)
            .into_iter()
            .map(|(digest, tx)| (digest, Element { digest, tx }))
            .collect();
        match self.sabotage {
            OracleSabotage::DuplicateDecision if round == 1 => {
                if let Some(e) = self.first_round.first() {
                    elems.insert(e.digest, e.clone());
                }
            }
            OracleSabotage::InvalidElement if round == 0 => {
                if let Some(e) = elems.values().next() {
                    let mut bad = e.tx.clone();
                    bad.payload.push(0xff);
                    let digest = bad.digest();
                    elems.insert(digest, Element { digest, tx: bad });
                }
            }
            _ => {}
        }
        for d in elems.keys() {
            self.decided.insert(*d);
        }
        let full = ElementSet::from_sorted(elems.into_values().collect());
        if round == 0 {
            self.first_round = full.iter().cloned().collect();
        }
        let mut sets: BTreeMap<ReplicaId, ElementSet> = (0..self.n)
            .map(|i| (ReplicaId(i as u16), full.clone()))
            .collect();
        let mut proposed = full.clone();
        if let OracleSabotage::Disagree { target } = self.sabotage {
            if let Some(x) = self.carry.take() {
                let mut v: Vec<Element> = full.iter().cloned().collect();
                v.push(x);
                v.sort_by_key(|e| e.digest);
                proposed = ElementSet::from_sorted(v.clone());
                sets.insert(target, ElementSet::from_sorted(v));
            } else if !self.disagreed && full.len() >= 2 {
                self.disagreed = true;
                let mut v: Vec<Element> = full.iter().cloned().collect();
                self.carry = v.pop();
                sets.insert(target, ElementSet::from_sorted(v));
            }
        }
        self.round += 1;
        Some(OracleDecision {
            round,
            proposed,
            sets,
        })
    }
}

/// Replica-side endpoint of the oracle engine.
#[derive(Debug)]
pub struct OracleClient {
    directory: Arc<ClientDirectory>,
    forwarded: BTreeSet<Digest>,
    decided: HashSet<Digest>,
    next_round: u64,
    buffer: BTreeMap<u64, ElementSet>,
}

impl OracleClient {
    pub fn new(directory: Arc<ClientDirectory>) -> Self {
        OracleClient {
            directory,
            forwarded: BTreeSet::new(),
            decided: HashSet::new(),
            next_round: 0,
            buffer: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, e: TransactionRequest) -> (bool, SbcStep) {
        let mut step = SbcStep::default();
        let d = e.digest();
        if self.decided.contains(&d) || !validate(&e, &self.directory) {
            return (false, step);
        }
        if self.forwarded.insert(d) {
            step.actions.push(SbcAction::ToOracle(e));
        }
        (true, step)
    }

    pub fn on_message(&mut self, msg: SbcMessage) -> SbcStep {
        let mut step = SbcStep::default();
        let SbcMessage::Decided { round, set } = msg else {
            return step;
        };
        if round >= self.next_round {
            self.buffer.entry(round).or_insert(set);
        }
        while let Some(set) = self.buffer.remove(&self.next_round) {
            for d in set.digests() {
                self.decided.insert(d);
                self.forwarded.remove(&d);
            }
            step.delivered.push(SetDeliver {
                round: self.next_round,
                set,
            });
            self.next_round += 1;
        }
        step
    }

    pub fn is_decided(&self, d: &Digest) -> bool {
        self.decided.contains(d)
    }

    pub fn is_idle(&self) -> bool {
        self.forwarded.is_empty() && self.buffer.is_empty()
    }
}
