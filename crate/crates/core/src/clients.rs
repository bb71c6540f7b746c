//! Client-side protocols: L2 users submitting requests with retries, and
//! state-transition-function clients translating accepted tags.
//!
//! Both are pure state machines over a target type `T` (a replica, or the
//! sequencer in semi mode). The caller delivers replies and ticks and
//! forwards the returned contacts.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::hash_batch;
use crate::error::AddError;
use crate::types::{Batch, BatchTag, TransactionRequest, Translation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Contact the whole budget at once.
    Parallel,
    /// One contact at a time, moving on after a timeout.
    #[default]
    Sequential,
    /// Translation: contact the tag's signers one at a time.
    Optimistic,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Parallel => "parallel",
            Strategy::Sequential => "sequential",
            Strategy::Optimistic => "optimistic",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallel" => Ok(Strategy::Parallel),
            "sequential" => Ok(Strategy::Sequential),
            "optimistic" => Ok(Strategy::Optimistic),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClientPolicy {
    pub strategy: Strategy,
    /// Distinct targets a submission may contact.
    pub retry_budget: usize,
    /// Ticks to wait for inclusion (or an answer) before moving on.
    pub observation_timeout: u64,
}

impl ClientPolicy {
    pub fn new(strategy: Strategy, retry_budget: usize, observation_timeout: u64) -> Self {
        ClientPolicy {
            strategy,
            retry_budget: retry_budget.max(1),
            observation_timeout: observation_timeout.max(1),
        }
    }

    pub fn default_timeout(turn_slice: u64, n: usize) -> u64 {
        2 * turn_slice * n as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubmitOutcome {
    Pending,
    Included,
    /// Budget spent without observing inclusion.
    Exhausted,
    Rejected(AddError),
}

impl SubmitOutcome {
    pub fn is_terminal(self) -> bool {
        self != SubmitOutcome::Pending
    }
}

/// One request submitted by a user.
#[derive(Clone, Debug)]
pub struct Submission<T> {
    pub tx: TransactionRequest,
    policy: ClientPolicy,
    targets: Vec<T>,
    contacted: usize,
    next_at: u64,
    oneshot: bool,
    outcome: SubmitOutcome,
}

impl<T: Copy + PartialEq> Submission<T> {
    /// `targets` is the order in which replicas are tried.
    pub fn new(tx: TransactionRequest, policy: ClientPolicy, targets: Vec<T>) -> Self {
        Submission {
            tx,
            policy,
            targets,
            contacted: 0,
            next_at: 0,
            oneshot: false,
            outcome: SubmitOutcome::Pending,
        }
    }

    /// Contacts the first target once and finishes on its reply or after
    /// one timeout, without watching for inclusion.
    pub fn oneshot(mut self) -> Self {
        self.oneshot = true;
        self
    }

    pub fn outcome(&self) -> SubmitOutcome {
        self.outcome
    }

    pub fn contacts(&self) -> usize {
        self.contacted
    }

    /// Returns the targets to contact now.
    pub fn on_tick(&mut self, now: u64, included: bool) -> Vec<T> {
        if included && !self.oneshot && !matches!(self.outcome, SubmitOutcome::Rejected(_)) {
            self.outcome = SubmitOutcome::Included;
            return Vec::new();
        }
        if self.outcome.is_terminal() {
            return Vec::new();
        }
        let budget = if self.oneshot {
            1
        } else {
            self.policy.retry_budget.min(self.targets.len())
        };
        if self.contacted == 0 {
            let k = match self.policy.strategy {
                Strategy::Parallel => budget,
                _ => 1,
            };
            return self.contact(now, k);
        }
        if now < self.next_at {
            return Vec::new();
        }
        if self.contacted >= budget {
            self.outcome = SubmitOutcome::Exhausted;
            return Vec::new();
        }
        self.contact(now, 1)
    }

    fn contact(&mut self, now: u64, k: usize) -> Vec<T> {
        let out: Vec<T> = self.targets[self.contacted..self.contacted + k].to_vec();
        self.contacted += k;
        self.next_at = now + self.policy.observation_timeout;
        out
    }

    pub fn on_reply(&mut self, reply: Result<(), AddError>) {
        match reply {
            Err(AddError::Invalid) => self.outcome = SubmitOutcome::Rejected(AddError::Invalid),
            Err(AddError::Duplicate) if self.oneshot => {
                self.outcome = SubmitOutcome::Rejected(AddError::Duplicate)
            }
            Ok(()) if self.oneshot => self.outcome = SubmitOutcome::Exhausted,
            _ => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TranslateOutcome {
    Pending,
    Done(Batch),
    Failed,
}

/// Translation of one accepted tag. Every answer is re-hashed locally.
#[derive(Clone, Debug)]
pub struct TranslateSession<T> {
    pub tag: BatchTag,
    candidates: Vec<T>,
    parallel: bool,
    max_passes: usize,
    timeout: u64,
    next: usize,
    passes: usize,
    waiting: BTreeSet<usize>,
    deadline: u64,
    distinct: BTreeSet<usize>,
    requests: usize,
    rejected: usize,
    outcome: TranslateOutcome,
}

impl<T: Copy + PartialEq> TranslateSession<T> {
    /// Signer-directed: contacts the tag's signers one at a time.
    pub fn optimistic(tag: BatchTag, signers: Vec<T>, timeout: u64) -> Self {
        Self::build(tag, signers, false, 1, timeout)
    }

    /// Generic: cycles over a fixed set of `f + 1` targets, either one at a
    /// time or all at once, until an answer verifies.
    pub fn generic(tag: BatchTag, targets: Vec<T>, parallel: bool, timeout: u64) -> Self {
        Self::build(tag, targets, parallel, 8, timeout)
    }

    fn build(tag: BatchTag, candidates: Vec<T>, parallel: bool, passes: usize, timeout: u64) -> Self {
        TranslateSession {
            tag,
            candidates,
            parallel,
            max_passes: passes,
            timeout: timeout.max(1),
            next: 0,
            passes: 0,
            waiting: BTreeSet::new(),
            deadline: 0,
            distinct: BTreeSet::new(),
            requests: 0,
            rejected: 0,
            outcome: TranslateOutcome::Pending,
        }
    }

    pub fn outcome(&self) -> &TranslateOutcome {
        &self.outcome
    }

    /// Distinct targets contacted so far.
    pub fn contacts(&self) -> usize {
        self.distinct.len()
    }

    pub fn requests(&self) -> usize {
        self.requests
    }

    /// Answers discarded because they did not re-hash to the tag.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn on_tick(&mut self, now: u64) -> Vec<T> {
        if self.outcome != TranslateOutcome::Pending || self.candidates.is_empty() {
            if self.candidates.is_empty() {
                self.outcome = TranslateOutcome::Failed;
            }
            return Vec::new();
        }
        if !self.waiting.is_empty() && now < self.deadline {
            return Vec::new();
        }
        self.waiting.clear();
        if self.next >= self.candidates.len() {
            self.passes += 1;
            if self.passes >= self.max_passes {
                self.outcome = TranslateOutcome::Failed;
                return Vec::new();
            }
            self.next = 0;
        }
        let k = if self.parallel {
            self.candidates.len() - self.next
        } else {
            1
        };
        let idx: Vec<usize> = (self.next..self.next + k).collect();
        self.next += k;
        self.deadline = now + self.timeout;
        for i in &idx {
            self.waiting.insert(*i);
            self.distinct.insert(*i);
        }
        self.requests += idx.len();
        idx.into_iter().map(|i| self.candidates[i]).collect()
    }

    pub fn on_response(&mut self, from: T, answer: Translation) {
        if self.outcome != TranslateOutcome::Pending {
            return;
        }
        let Some(i) = self.candidates.iter().position(|c| *c == from) else {
            return;
        };
        if !self.waiting.remove(&i) {
            return;
        }
        if let Translation::Found(b) = answer {
            if b.id == self.tag.id && hash_batch(&b).ok() == Some(self.tag.hash) {
                self.outcome = TranslateOutcome::Done(b);
                return;
            }
            self.rejected += 1;
        }
        if self.waiting.is_empty() {
            // Every outstanding answer was useless: move on without waiting.
            self.deadline = 0;
        }
    }
}
