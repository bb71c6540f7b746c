//! Reference SBC replica.
//!
//! Each round runs in two layers:
//!
//! 1. Every participating replica reliably broadcasts its proposal (the
//!    valid, undecided elements it knows). Delivered proposals are also
//!    adopted into the local pending pool, so an element known to one
//!    honest replica becomes known to all of them.
//! 2. The coordinator of view `v`, replica `(round + v) mod n`, proposes
//!    the union of the delivered proposals of at least `n - f` members.
//!    Replicas accept it only if it is exactly that union (minus invalid
//!    and previously decided elements), which makes omitting an element
//!    proposed by every honest replica impossible. Agreement follows the
//!    lock/valid-value rules of Tendermint: ECHO (first vote) and COMMIT
//!    (second vote) with quorums of `ceil((n + f + 1) / 2)`, and a view
//!    change on timeout. Timeouts grow linearly with the view.
//!
//! A replica that decides announces the decided set. A replica still in
//! that round adopts a set announced by `f + 1` distinct replicas, so
//! replicas left behind by a quorum that moved on still terminate.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use super::rbc::{RbcInstance, RbcOut, RbcThresholds};
use super::{Element, ElementSet, SbcAction, SbcMessage, SbcStep, SetDeliver, SetValue};
use crate::crypto::Digest;
use crate::types::{validate, ClientDirectory, ReplicaId, TransactionRequest};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SbcConfig {
    pub n: usize,
    pub f: usize,
    /// Propose/echo/commit timeout in view 0, in ticks.
    pub timeout_base: u64,
    /// Added per view.
    pub timeout_step: u64,
}

impl SbcConfig {
    pub fn new(n: usize, f: usize) -> Self {
        SbcConfig {
            n,
            f,
            timeout_base: 30,
            timeout_step: 15,
        }
    }

    pub fn quorum(&self) -> usize {
        (self.n + self.f + 2) / 2
    }

    pub fn coordinator(&self, round: u64, view: u32) -> ReplicaId {
        ReplicaId(((round + view as u64) % self.n as u64) as u16)
    }

    fn timeout(&self, view: u32) -> u64 {
        self.timeout_base + self.timeout_step * view as u64
    }
}

/// Scripted misbehavior of a Byzantine SBC replica.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum SbcFault {
    #[default]
    None,
    /// Sends conflicting proposals and votes to different halves.
    Equivocate,
    /// Never proposes these elements, including as coordinator.
    Censor(BTreeSet<Digest>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    Propose,
    Echo,
    Commit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Timer {
    Propose,
    Echo,
    Commit,
}

#[derive(Debug, PartialEq, Eq)]
enum Validity {
    Valid,
    Invalid,
    Pending,
}

#[derive(Debug, Default)]
struct ViewState {
    proposal: Option<(SetValue, Option<u32>)>,
    echoes: BTreeMap<ReplicaId, Option<Digest>>,
    commits: BTreeMap<ReplicaId, Option<Digest>>,
    senders: BTreeSet<ReplicaId>,
}

impl ViewState {
    fn count_echo(&self, id: Option<Digest>) -> usize {
        self.echoes.values().filter(|v| **v == id).count()
    }
}

#[derive(Debug)]
struct Instance {
    view: u32,
    step: Step,
    locked: Option<(u32, Digest)>,
    valid: Option<(u32, SetValue)>,
    views: BTreeMap<u32, ViewState>,
    values: HashMap<Digest, SetValue>,
    proposed: bool,
    echo_timer: bool,
    commit_timer: bool,
    lock_fired: bool,
    timers: Vec<(u64, Timer, u32)>,
}

impl Instance {
    fn new() -> Self {
        Instance {
            view: 0,
            step: Step::Propose,
            locked: None,
            valid: None,
            views: BTreeMap::new(),
            values: HashMap::new(),
            proposed: false,
            echo_timer: false,
            commit_timer: false,
            lock_fired: false,
            timers: Vec::new(),
        }
    }

    fn view_state(&mut self, v: u32) -> &mut ViewState {
        self.views.entry(v).or_default()
    }
}

#[derive(Debug)]
pub struct ReferenceReplica {
    cfg: SbcConfig,
    me: ReplicaId,
    directory: Arc<ClientDirectory>,
    fault: SbcFault,
    now: u64,
    round: u64,
    started: bool,
    decided_log: HashSet<Digest>,
    pending: BTreeMap<Digest, TransactionRequest>,
    valid_cache: HashMap<Digest, bool>,
    rbc: BTreeMap<(u64, ReplicaId), RbcInstance>,
    delivered: BTreeMap<u64, BTreeMap<ReplicaId, ElementSet>>,
    inst: Instance,
    buffered: BTreeMap<u64, Vec<(ReplicaId, SbcMessage)>>,
    announced: BTreeMap<u64, BTreeMap<Digest, (ElementSet, BTreeSet<ReplicaId>)>>,
}

impl ReferenceReplica {
    pub fn new(
        cfg: SbcConfig,
        me: ReplicaId,
        directory: Arc<ClientDirectory>,
        fault: SbcFault,
    ) -> Self {
        ReferenceReplica {
            cfg,
            me,
            directory,
            fault,
            now: 0,
            round: 0,
            started: false,
            decided_log: HashSet::new(),
            pending: BTreeMap::new(),
            valid_cache: HashMap::new(),
            rbc: BTreeMap::new(),
            delivered: BTreeMap::new(),
            inst: Instance::new(),
            buffered: BTreeMap::new(),
            announced: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.me
    }

    /// Next round this replica has not decided.
    pub fn current_round(&self) -> u64 {
        self.round
    }

    pub fn current_view(&self) -> u32 {
        self.inst.view
    }

    pub fn is_decided(&self, d: &Digest) -> bool {
        self.decided_log.contains(d)
    }

    pub fn is_idle(&self) -> bool {
        !self.started && self.pending.is_empty()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    fn censored(&self, d: &Digest) -> bool {
        matches!(&self.fault, SbcFault::Censor(set) if set.contains(d))
    }

    fn is_valid(&mut self, e: &Element) -> bool {
        if let Some(v) = self.valid_cache.get(&e.digest) {
            return *v;
        }
        let v = validate(&e.tx, &self.directory);
        self.valid_cache.insert(e.digest, v);
        v
    }

    /// `Add(e)`: invalid, decided or already pending elements are dropped.
    pub fn add(&mut self, now: u64, e: TransactionRequest) -> (bool, SbcStep) {
        self.now = now;
        let mut step = SbcStep::default();
        let elem = Element {
            digest: e.digest(),
            tx: e,
        };
        if self.decided_log.contains(&elem.digest) || !self.is_valid(&elem) {
            return (false, step);
        }
        if !self.censored(&elem.digest) {
            self.pending.entry(elem.digest).or_insert(elem.tx);
        }
        self.maybe_start(&mut step);
        (true, step)
    }

    pub fn on_tick(&mut self, now: u64) -> SbcStep {
        self.now = now;
        let mut step = SbcStep::default();
        if !self.started {
            return step;
        }
        let view = self.inst.view;
        let due: Vec<(Timer, u32)> = self
            .inst
            .timers
            .iter()
            .filter(|(at, _, v)| *at <= now && *v == view)
            .map(|(_, t, v)| (*t, *v))
            .collect();
        self.inst.timers.retain(|(at, _, v)| *at > now && *v >= view);
        for (timer, v) in due {
            if self.inst.view != v || !self.started {
                continue;
            }
            match timer {
                Timer::Propose if self.inst.step == Step::Propose => {
                    self.send_echo(None, &mut step);
                }
                Timer::Echo if self.inst.step == Step::Echo => {
                    self.send_commit(None, &mut step);
                }
                Timer::Commit => {
                    let next = v + 1;
                    self.broadcast(
                        SbcMessage::ViewChange {
                            round: self.round,
                            view: next,
                        },
                        &mut step,
                    );
                    self.enter_view(next);
                }
                _ => {}
            }
        }
        self.progress(&mut step);
        step
    }

    pub fn on_message(&mut self, now: u64, from: ReplicaId, msg: SbcMessage) -> SbcStep {
        self.now = now;
        let mut step = SbcStep::default();
        if from.index() >= self.cfg.n {
            return step;
        }
        match msg {
            SbcMessage::RbcSend { round, set } => {
                let th = self.thresholds();
                let out = self.rbc.entry((round, from)).or_default().on_send(set, th);
                self.apply_rbc(round, from, out, &mut step);
            }
            SbcMessage::RbcEcho { round, origin, set } => {
                let th = self.thresholds();
                let out = self
                    .rbc
                    .entry((round, origin))
                    .or_default()
                    .on_echo(from, set, th);
                self.apply_rbc(round, origin, out, &mut step);
            }
            SbcMessage::RbcReady {
                round,
                origin,
                digest,
            } => {
                let th = self.thresholds();
                let out = self
                    .rbc
                    .entry((round, origin))
                    .or_default()
                    .on_ready(from, digest, th);
                self.apply_rbc(round, origin, out, &mut step);
            }
            SbcMessage::Decided { round, set } => {
                if round >= self.round {
                    self.announced
                        .entry(round)
                        .or_default()
                        .entry(set.content_digest())
                        .or_insert_with(|| (set, BTreeSet::new()))
                        .1
                        .insert(from);
                }
            }
            other => {
                let r = other.round();
                if r < self.round {
                    return step;
                }
                if r > self.round || !self.started {
                    self.buffered.entry(r).or_default().push((from, other));
                    return step;
                }
                self.record(from, other);
            }
        }
        self.progress(&mut step);
        step
    }

    fn thresholds(&self) -> RbcThresholds {
        RbcThresholds::new(self.cfg.n, self.cfg.f)
    }

    fn apply_rbc(&mut self, round: u64, origin: ReplicaId, out: Vec<RbcOut>, step: &mut SbcStep) {
        for o in out {
            match o {
                RbcOut::Echo(set) => self.broadcast(SbcMessage::RbcEcho { round, origin, set }, step),
                RbcOut::Ready(digest) => self.broadcast(
                    SbcMessage::RbcReady {
                        round,
                        origin,
                        digest,
                    },
                    step,
                ),
                RbcOut::Deliver(set) => {
                    for e in set.iter() {
                        if !self.decided_log.contains(&e.digest)
                            && !self.censored(&e.digest)
                            && self.is_valid(e)
                        {
                            self.pending.entry(e.digest).or_insert_with(|| e.tx.clone());
                        }
                    }
                    self.delivered.entry(round).or_default().insert(origin, set);
                    self.maybe_start(step);
                }
            }
        }
    }

    fn maybe_start(&mut self, step: &mut SbcStep) {
        if self.started || self.pending.is_empty() {
            return;
        }
        self.started = true;
        let proposal = ElementSet::from_sorted(
            self.pending
                .iter()
                .map(|(d, tx)| Element {
                    digest: *d,
                    tx: tx.clone(),
                })
                .collect(),
        );
        step.proposed.push((self.round, proposal.clone()));
        self.broadcast(
            SbcMessage::RbcSend {
                round: self.round,
                set: proposal,
            },
            step,
        );
        self.enter_view(0);
        if let Some(msgs) = self.buffered.remove(&self.round) {
            for (from, m) in msgs {
                self.record(from, m);
            }
        }
        self.progress(step);
    }

    fn enter_view(&mut self, v: u32) {
        let inst = &mut self.inst;
        inst.view = v;
        inst.step = Step::Propose;
        inst.proposed = false;
        inst.echo_timer = false;
        inst.commit_timer = false;
        inst.lock_fired = false;
        inst.timers
            .push((self.now + self.cfg.timeout(v), Timer::Propose, v));
    }

    fn record(&mut self, from: ReplicaId, msg: SbcMessage) {
        match msg {
            SbcMessage::Propose {
                view,
                value,
                valid_view,
                ..
            } => {
                if from != self.cfg.coordinator(self.round, view)
                    || valid_view.is_some_and(|vv| vv >= view)
                {
                    return;
                }
                let vs = self.inst.view_state(view);
                vs.senders.insert(from);
                if vs.proposal.is_none() {
                    vs.proposal = Some((value.clone(), valid_view));
                    self.inst.values.insert(value.id(), value);
                }
            }
            SbcMessage::Echo { view, value, .. } => {
                let vs = self.inst.view_state(view);
                vs.senders.insert(from);
                vs.echoes.entry(from).or_insert(value);
            }
            SbcMessage::Commit { view, value, .. } => {
                let id = value.as_ref().map(SetValue::id);
                if let Some(v) = value {
                    self.inst.values.entry(v.id()).or_insert(v);
                }
                let vs = self.inst.view_state(view);
                vs.senders.insert(from);
                vs.commits.entry(from).or_insert(id);
            }
            SbcMessage::ViewChange { view, .. } => {
                self.inst.view_state(view).senders.insert(from);
            }
            _ => {}
        }
    }

    /// Checks that `value` is exactly the filtered union of the delivered
    /// proposals of its members.
    fn validity(&mut self, value: &SetValue) -> Validity {
        let n = self.cfg.n;
        if value.members.len() < n - self.cfg.f
            || value.members.iter().any(|m| m.index() >= n)
            || value.members.windows(2).any(|w| w[0] >= w[1])
            || value.elements.is_empty()
        {
            return Validity::Invalid;
        }
        let Some(delivered) = self.delivered.get(&self.round) else {
            return Validity::Pending;
        };
        let mut sets = Vec::with_capacity(value.members.len());
        for m in &value.members {
            match delivered.get(m) {
                Some(s) => sets.push(s.clone()),
                None => return Validity::Pending,
            }
        }
        match self.filtered_union(&sets) {
            Some(u) if u == value.elements => Validity::Valid,
            _ => Validity::Invalid,
        }
    }

    fn filtered_union(&mut self, sets: &[ElementSet]) -> Option<ElementSet> {
        let mut union: BTreeMap<Digest, Element> = BTreeMap::new();
        for s in sets {
            for e in s.iter() {
                if union.contains_key(&e.digest) || self.decided_log.contains(&e.digest) {
                    continue;
                }
                if self.is_valid(e) {
                    union.insert(e.digest, e.clone());
                }
            }
        }
        if union.is_empty() {
            None
        } else {
            Some(ElementSet::from_sorted(union.into_values().collect()))
        }
    }

    fn make_proposal(&mut self) -> Option<(SetValue, Option<u32>)> {
        if let Some((vv, value)) = &self.inst.valid {
            return Some((value.clone(), Some(*vv)));
        }
        let delivered = self.delivered.get(&self.round)?;
        if delivered.len() < self.cfg.n - self.cfg.f {
            return None;
        }
        let members: Vec<ReplicaId> = delivered.keys().copied().collect();
        let sets: Vec<ElementSet> = delivered.values().cloned().collect();
        let mut elements = self.filtered_union(&sets)?;
        if let SbcFault::Censor(c) = &self.fault {
            elements = elements.without(c);
        }
        Some((SetValue { members, elements }, None))
    }

    fn send_echo(&mut self, id: Option<Digest>, step: &mut SbcStep) {
        let msg = SbcMessage::Echo {
            round: self.round,
            view: self.inst.view,
            value: id,
        };
        self.broadcast(msg, step);
        self.inst.step = Step::Echo;
    }

    fn send_commit(&mut self, value: Option<SetValue>, step: &mut SbcStep) {
        let msg = SbcMessage::Commit {
            round: self.round,
            view: self.inst.view,
            value,
        };
        self.broadcast(msg, step);
        self.inst.step = Step::Commit;
    }

    fn progress(&mut self, step: &mut SbcStep) {
        loop {
            if self.catch_up(step) {
                continue;
            }
            if !(self.started && self.progress_once(step)) {
                break;
            }
        }
    }

    /// Adopts the current round's set once `f + 1` replicas announced it.
    fn catch_up(&mut self, step: &mut SbcStep) -> bool {
        let threshold = self.cfg.f + 1;
        let set = self.announced.get(&self.round).and_then(|by_set| {
            by_set
                .values()
                .find(|(_, from)| from.len() >= threshold)
                .map(|(set, _)| set.clone())
        });
        match set {
            Some(set) => {
                self.decide(set, step);
                true
            }
            None => false,
        }
    }

    fn progress_once(&mut self, step: &mut SbcStep) -> bool {
        let q = self.cfg.quorum();
        let view = self.inst.view;

        // Decision: a COMMIT quorum for a known value in any view.
        let decision = self.inst.views.values().find_map(|vs| {
            let mut counts: BTreeMap<Digest, usize> = BTreeMap::new();
            for id in vs.commits.values().flatten() {
                *counts.entry(*id).or_default() += 1;
            }
            counts
                .into_iter()
                .find(|(id, c)| *c >= q && self.inst.values.contains_key(id))
                .map(|(id, _)| self.inst.values[&id].clone())
        });
        if let Some(value) = decision {
            self.decide(value.elements, step);
            return true;
        }

        // Catch up with f + 1 replicas that moved to a later view.
        let skip = self
            .inst
            .views
            .iter()
            .rev()
            .find(|(v, vs)| **v > view && vs.senders.len() > self.cfg.f)
            .map(|(v, _)| *v);
        if let Some(v) = skip {
            self.enter_view(v);
            return true;
        }

        if self.inst.step == Step::Propose
            && !self.inst.proposed
            && self.cfg.coordinator(self.round, view) == self.me
        {
            if let Some((value, valid_view)) = self.make_proposal() {
                self.inst.proposed = true;
                self.broadcast(
                    SbcMessage::Propose {
                        round: self.round,
                        view,
                        value,
                        valid_view,
                    },
                    step,
                );
                return true;
            }
        }

        let proposal = self
            .inst
            .views
            .get(&view)
            .and_then(|vs| vs.proposal.clone());

        if self.inst.step == Step::Propose {
            if let Some((value, valid_view)) = &proposal {
                let id = value.id();
                match valid_view {
                    None => match self.validity(value) {
                        Validity::Pending => {}
                        Validity::Invalid => {
                            self.send_echo(None, step);
                            return true;
                        }
                        Validity::Valid => {
                            let ok = self.inst.locked.is_none_or(|(_, l)| l == id);
                            self.send_echo(ok.then_some(id), step);
                            return true;
                        }
                    },
                    Some(vr) => {
                        let polka = self
                            .inst
                            .views
                            .get(vr)
                            .is_some_and(|vs| vs.count_echo(Some(id)) >= q);
                        if polka {
                            match self.validity(value) {
                                Validity::Pending => {}
                                Validity::Invalid => {
                                    self.send_echo(None, step);
                                    return true;
                                }
                                Validity::Valid => {
                                    let ok = self
                                        .inst
                                        .locked
                                        .is_none_or(|(lv, l)| lv <= *vr || l == id);
                                    self.send_echo(ok.then_some(id), step);
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
        }

        let vs_counts = self.inst.views.get(&view).map(|vs| {
            (
                vs.echoes.len(),
                vs.count_echo(None),
                vs.commits.len(),
            )
        });
        let (echo_total, echo_nil, commit_total) = vs_counts.unwrap_or((0, 0, 0));

        if self.inst.step == Step::Echo && echo_total >= q && !self.inst.echo_timer {
            self.inst.echo_timer = true;
            let at = self.now + self.cfg.timeout(view);
            self.inst.timers.push((at, Timer::Echo, view));
        }

        if self.inst.step >= Step::Echo && !self.inst.lock_fired {
            if let Some((value, _)) = &proposal {
                let id = value.id();
                let polka = self
                    .inst
                    .views
                    .get(&view)
                    .is_some_and(|vs| vs.count_echo(Some(id)) >= q);
                if polka && self.validity(value) == Validity::Valid {
                    self.inst.lock_fired = true;
                    if self.inst.step == Step::Echo {
                        self.inst.locked = Some((view, id));
                        self.send_commit(Some(value.clone()), step);
                    }
                    self.inst.valid = Some((view, value.clone()));
                    return true;
                }
            }
        }

        if self.inst.step == Step::Echo && echo_nil >= q {
            self.send_commit(None, step);
            return true;
        }

        if commit_total >= q && !self.inst.commit_timer {
            self.inst.commit_timer = true;
            let at = self.now + self.cfg.timeout(view);
            self.inst.timers.push((at, Timer::Commit, view));
        }
        false
    }

    fn decide(&mut self, set: ElementSet, step: &mut SbcStep) {
        self.broadcast(
            SbcMessage::Decided {
                round: self.round,
                set: set.clone(),
            },
            step,
        );
        for e in set.iter() {
            self.decided_log.insert(e.digest);
            self.pending.remove(&e.digest);
        }
        step.delivered.push(SetDeliver {
            round: self.round,
            set,
        });
        self.round += 1;
        self.started = false;
        self.inst = Instance::new();
        let keep = self.round;
        self.buffered.retain(|r, _| *r >= keep);
        self.delivered.retain(|r, _| *r >= keep);
        self.announced.retain(|r, _| *r >= keep);
        self.maybe_start(step);
    }

    fn broadcast(&self, msg: SbcMessage, step: &mut SbcStep) {
        if self.fault != SbcFault::Equivocate {
            step.actions.push(SbcAction::Broadcast(msg));
            return;
        }
        let Some(alt) = self.equivocal_twin(&msg) else {
            step.actions.push(SbcAction::Broadcast(msg));
            return;
        };
        for i in 0..self.cfg.n {
            let m = if i % 2 == 0 { msg.clone() } else { alt.clone() };
            step.actions.push(SbcAction::Send(ReplicaId(i as u16), m));
        }
    }

    /// The message sent to odd-indexed replicas by an equivocating replica.
    fn equivocal_twin(&self, msg: &SbcMessage) -> Option<SbcMessage> {
        match msg {
            SbcMessage::RbcSend { round, set } => Some(SbcMessage::RbcSend {
                round: *round,
                set: drop_last(set),
            }),
            SbcMessage::Propose {
                round,
                view,
                value,
                valid_view,
            } => Some(SbcMessage::Propose {
                round: *round,
                view: *view,
                value: SetValue {
                    members: value.members.clone(),
                    elements: drop_last(&value.elements),
                },
                valid_view: *valid_view,
            }),
            SbcMessage::Echo { round, view, .. } => Some(SbcMessage::Echo {
                round: *round,
                view: *view,
                value: None,
            }),
            SbcMessage::Commit { round, view, .. } => Some(SbcMessage::Commit {
                round: *round,
                view: *view,
                value: None,
            }),
            _ => None,
        }
    }
}

fn drop_last(set: &ElementSet) -> ElementSet {
    let mut v: Vec<Element> = set.iter().cloned().collect();
    v.pop();
    ElementSet::from_sorted(v)
}
