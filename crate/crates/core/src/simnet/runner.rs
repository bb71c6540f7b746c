//! Scenario execution.
//!
//! One tick proceeds in a fixed order: due messages are delivered in a
//! seeded shuffle, the chain includes due logger posts, then the oracle,
//! replicas, sequencer, users and the STF client act. The run ends once
//! every user and translation is finished and nothing honest is left in
//! flight, or when the tick budget is spent.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::Net;
use super::scenario::{
    Behavior, Engine, OracleSabotageKind, Protocol, Scenario, ScenarioError, SequencerKind,
    TranslateStrategy,
};
use super::transcript::{digest_list, Meta, Writer};
use crate::clients::{ClientPolicy, Strategy, SubmitOutcome, Submission, TranslateOutcome, TranslateSession};
use crate::crypto::{hash_batch, sha256, verify_aggregate, Digest, KeyPair, Pki};
use crate::error::AddError;
use crate::full::{FullAction, FullBehavior, FullParams, FullReplica, FullStep, SigTag};
use crate::logger::{signer_bitmap, Chain, Logger, LoggerView};
use crate::sbc::{
    ElementSet, OracleClient, OracleSabotage, OracleSbc, ReferenceReplica, SbcAction, SbcConfig,
    SbcFault, SbcMessage, SbcNode, SbcStep,
};
use crate::semi::{DacBehavior, DacMember, Sequencer, SequencerBehavior, SequencerOutput, SignRequest, SignResponse};
use crate::types::{
    validate, Batch, CertifiedBatchTag, ClientDirectory, ClientId, ClientKey, ReplicaId,
    TransactionRequest, Translation,
};

/// Result of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub transcript: String,
    /// Logger history as `tick,outcome,id,hash,signers`.
    pub logger_csv: String,
    pub end_tick: u64,
    pub quiescent: bool,
    pub accepted: usize,
}

pub fn run(s: &Scenario) -> Result<RunOutput, ScenarioError> {
    s.validate()?;
    Ok(Sim::new(s)?.run())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Replica(u16),
    Seq,
    Oracle,
    Client(u64),
    Stf,
}

impl Node {
    fn name(self) -> String {
        match self {
            Node::Replica(i) => format!("r{i}"),
            Node::Seq => "seq".into(),
            Node::Oracle => "oracle".into(),
            Node::Client(k) => format!("c{k}"),
            Node::Stf => "stf".into(),
        }
    }
}

#[derive(Clone, Debug)]
enum Payload {
    Submit { sub: usize, tx: TransactionRequest },
    Reply { sub: usize, result: Result<(), AddError> },
    Sbc(SbcMessage),
    ToOracle(TransactionRequest),
    Decided(SbcMessage),
    SigTag(SigTag),
    SignReq(Arc<SignRequest>),
    SignResp(SignResponse),
    TranslateReq { session: usize, id: u64, hash: Digest },
    TranslateResp { session: usize, answer: Translation },
}

#[derive(Debug)]
enum Replica {
    Full(Box<FullReplica>),
    Sbc(SbcNode),
    Dac(DacMember),
}

struct Sub {
    client: u64,
    at: u64,
    invalid: bool,
    done: bool,
    sub: Submission<Node>,
}

struct Session {
    done: bool,
    session: TranslateSession<Node>,
}

struct Sim<'a> {
    s: &'a Scenario,
    n: usize,
    f: usize,
    now: u64,
    rng: ChaCha8Rng,
    net: Net<Node, Payload>,
    chain: Chain,
    logger: Logger,
    pki: Arc<Pki>,
    directory: Arc<ClientDirectory>,
    honest: BTreeSet<ReplicaId>,
    silent: HashSet<u16>,
    replicas: Vec<Replica>,
    sequencer: Option<Sequencer>,
    seq_honest: bool,
    oracle: Option<OracleSbc>,
    subs: Vec<Sub>,
    sessions: Vec<Session>,
    included: HashSet<Digest>,
    content_seen: HashSet<(u64, Digest)>,
    validity: HashMap<Digest, bool>,
    max_honest_signed: Option<u64>,
    honest_posts: usize,
    w: Writer,
}

fn derive_seed(label: &[u8], seed: u64, index: u64) -> [u8; 32] {
    sha256(&[label, &seed.to_be_bytes(), &index.to_be_bytes()]).0
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario) -> Result<Self, ScenarioError> {
        let (n, f) = (s.n, s.f);
        let keys: Vec<Arc<KeyPair>> = (0..n)
            .map(|i| Arc::new(KeyPair::from_seed(s.scheme, derive_seed(b"arranger/replica", s.seed, i as u64))))
            .collect();
        let pki = Arc::new(
            Pki::from_keypairs(s.scheme, keys.iter().enumerate().map(|(i, k)| (ReplicaId(i as u16), &**k)))
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?,
        );
        let mut wl = ChaCha8Rng::seed_from_u64(s.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(1);

        let clients: Vec<ClientKey> = (0..s.workload.clients)
            .map(|k| ClientKey::from_seed(ClientId(k), derive_seed(b"arranger/client", s.seed, k)))
            .collect();
        let mut directory = ClientDirectory::new();
        for c in &clients {
            directory.insert(c.id(), c.verifying_key());
        }
        let directory = Arc::new(directory);

        let byzantine = s.byzantine();
        let honest: BTreeSet<ReplicaId> = (0..n as u16)
            .filter(|i| !byzantine.contains(i))
            .map(ReplicaId)
            .collect();
        let silent: HashSet<u16> = s
            .faults
            .iter()
            .filter(|fs| fs.behavior == Behavior::Silent)
            .map(|fs| fs.replica)
            .collect();
        let seq_honest = s.mode != Protocol::Semi || s.sequencer.behavior == SequencerKind::Honest;

        // Workload: valid requests first, so that censor scripts know them.
        let mut valid: Vec<(u64, u64, TransactionRequest)> = Vec::new();
        let mut last = s.workload.start;
        for (k, c) in clients.iter().enumerate() {
            let mut at = s.workload.start;
            for j in 0..s.workload.txs_per_client {
                at += wl.gen_range(0..2 * s.workload.interval);
                let mut payload = vec![0u8; s.workload.payload_bytes];
                wl.fill(&mut payload[..]);
                valid.push((at, k as u64, c.sign_request(j, payload)));
                last = last.max(at);
            }
        }
        let censored = |client: Option<u64>| -> BTreeSet<Digest> {
            valid
                .iter()
                .filter(|(_, k, _)| Some(*k) == client)
                .map(|(_, _, tx)| tx.digest())
                .collect()
        };

        let mut sequencer = None;
        let mut oracle = None;
        let mut replicas = Vec::with_capacity(n);
        match s.mode {
            Protocol::Semi => {
                let behavior = match s.sequencer.behavior {
                    SequencerKind::Honest => SequencerBehavior::Honest,
                    SequencerKind::Withhold => SequencerBehavior::Withhold,
                    SequencerKind::WrongHash => SequencerBehavior::WrongHash,
                    SequencerKind::Censor => SequencerBehavior::Censor(censored(s.sequencer.censor_client)),
                    SequencerKind::ReuseId => SequencerBehavior::ReuseId,
                };
                sequencer = Some(Sequencer::new(f, s.batch, directory.clone(), pki.clone(), behavior));
                for (i, key) in keys.iter().enumerate() {
                    let wrong = s
                        .faults
                        .iter()
                        .any(|fs| fs.replica as usize == i && fs.behavior == Behavior::WrongTranslate);
                    let b = if wrong { DacBehavior::WrongTranslate } else { DacBehavior::Honest };
                    let mut m = DacMember::new(ReplicaId(i as u16), key.clone(), b);
                    if s.sabotage.amnesia {
                        m = m.with_amnesia();
                    }
                    replicas.push(Replica::Dac(m));
                }
            }
            Protocol::Full | Protocol::Sbc => {
                if s.engine == Engine::Oracle {
                    let target = honest.iter().next().copied().unwrap_or(ReplicaId(0));
                    let sabotage = match s.sabotage.oracle {
                        OracleSabotageKind::None => OracleSabotage::None,
                        OracleSabotageKind::DuplicateDecision => OracleSabotage::DuplicateDecision,
                        OracleSabotageKind::Disagree => OracleSabotage::Disagree { target },
                        OracleSabotageKind::InvalidElement => OracleSabotage::InvalidElement,
                    };
                    oracle = Some(OracleSbc::new(n, s.sbc.oracle_period, directory.clone(), sabotage));
                }
                let cfg = SbcConfig {
                    n,
                    f,
                    timeout_base: s.sbc.timeout_base,
                    timeout_step: s.sbc.timeout_step,
                };
                let mut params = FullParams::new(n, f, s.turn_slice);
                params.dedup = !s.sabotage.dedup_off;
                params.amnesia = s.sabotage.amnesia;
                for (i, key) in keys.iter().enumerate() {
                    let id = ReplicaId(i as u16);
                    let script = s.faults.iter().find(|fs| fs.replica as usize == i);
                    let fault = match script.map(|fs| fs.behavior) {
                        Some(Behavior::Equivocate) => SbcFault::Equivocate,
                        Some(Behavior::Censor) => SbcFault::Censor(censored(script.and_then(|fs| fs.censor_client))),
                        _ => SbcFault::None,
                    };
                    let node = match s.engine {
                        Engine::Reference => {
                            SbcNode::Reference(Box::new(ReferenceReplica::new(cfg, id, directory.clone(), fault)))
                        }
                        Engine::Oracle => SbcNode::Oracle(OracleClient::new(directory.clone())),
                    };
                    if s.mode == Protocol::Sbc {
                        replicas.push(Replica::Sbc(node));
                        continue;
                    }
                    let behavior = match script.map(|fs| fs.behavior) {
                        Some(Behavior::WrongHash) => FullBehavior::WrongHash,
                        Some(Behavior::SpamPosts) => FullBehavior::SpamPosts,
                        Some(Behavior::WrongTranslate) => FullBehavior::WrongTranslate,
                        Some(Behavior::Equivocate) => FullBehavior::Equivocate,
                        _ if s.sabotage.conflict_post.contains(&(i as u16)) => FullBehavior::ConflictPost,
                        _ => FullBehavior::Honest,
                    };
                    replicas.push(Replica::Full(Box::new(FullReplica::new(
                        id,
                        params,
                        key.clone(),
                        pki.clone(),
                        directory.clone(),
                        node,
                        behavior,
                    ))));
                }
            }
        }

        let mut sim = Sim {
            s,
            n,
            f,
            now: 0,
            rng,
            net: Net::new(s.schedule.clone()),
            chain: Chain::new(),
            logger: Logger::new(pki.clone(), f),
            pki,
            directory,
            honest,
            silent,
            replicas,
            sequencer,
            seq_honest,
            oracle,
            subs: Vec::new(),
            sessions: Vec::new(),
            included: HashSet::new(),
            content_seen: HashSet::new(),
            validity: HashMap::new(),
            max_honest_signed: None,
            honest_posts: 0,
            w: Writer::default(),
        };
        let quorum = byzantine.len() <= f
            && (s.mode != Protocol::Semi || (seq_honest && 2 * byzantine.len() < n));
        let meta = Meta {
            name: s.name.clone(),
            mode: s.mode.name().into(),
            n,
            f,
            seed: s.seed,
            engine: match s.engine {
                Engine::Reference => "reference".into(),
                Engine::Oracle => "oracle".into(),
            },
            quorum,
        };
        sim.w = Writer::new(&s.to_toml(), &meta, &sim.honest, seq_honest);

        let span = last.max(s.workload.start + 1);
        for (at, k, tx) in valid.iter().cloned() {
            sim.push_sub(&mut wl, k, at, tx, false, false);
        }
        for i in 0..s.workload.invalid {
            let k = wl.gen_range(0..clients.len() as u64);
            let at = wl.gen_range(s.workload.start..=span);
            let mut tx = clients[k as usize].sign_request(1_000_000 + i, vec![i as u8; s.workload.payload_bytes.max(1)]);
            if i % 2 == 0 {
                tx.payload[0] ^= 0x01;
            } else {
                tx.signature[0] ^= 0x01;
            }
            sim.push_sub(&mut wl, k, at, tx, true, false);
        }
        for _ in 0..s.workload.duplicates {
            if valid.is_empty() {
                break;
            }
            let (at0, k, tx) = valid[wl.gen_range(0..valid.len())].clone();
            let at = at0 + wl.gen_range(1..=2 * s.observation_timeout());
            sim.push_sub(&mut wl, k, at, tx, false, true);
        }
        Ok(sim)
    }

    fn push_sub(&mut self, wl: &mut ChaCha8Rng, client: u64, at: u64, tx: TransactionRequest, invalid: bool, oneshot: bool) {
        let s = self.s;
        let n = self.n as u16;
        let (targets, policy) = match s.mode {
            Protocol::Semi => (
                vec![Node::Seq],
                ClientPolicy::new(Strategy::Sequential, 1, s.observation_timeout()),
            ),
            Protocol::Full => {
                let start = wl.gen_range(0..n);
                let targets = (0..n).map(|j| Node::Replica((start + j) % n)).collect();
                let strategy = match s.clients.strategy {
                    Strategy::Parallel => Strategy::Parallel,
                    _ => Strategy::Sequential,
                };
                (targets, ClientPolicy::new(strategy, s.retry_budget(), s.observation_timeout()))
            }
            Protocol::Sbc => {
                let mut all: Vec<u16> = (0..n).collect();
                all.shuffle(wl);
                let k = match s.workload.spread {
                    0 => self.n,
                    k => k.min(self.n),
                };
                let targets: Vec<Node> = all[..k].iter().map(|i| Node::Replica(*i)).collect();
                (targets, ClientPolicy::new(Strategy::Parallel, k, s.observation_timeout()))
            }
        };
        let mut sub = Submission::new(tx, policy, targets);
        if oneshot {
            sub = sub.oneshot();
        }
        self.subs.push(Sub {
            client,
            at,
            invalid,
            done: false,
            sub,
        });
    }

    fn event(&mut self, actor: &str, kind: &str, fields: &[(&str, String)]) {
        self.w.event(self.now, actor, kind, fields);
    }

    fn send(&mut self, from: Node, to: Node, msg: Payload) {
        if let Node::Replica(i) = to {
            if self.silent.contains(&i) {
                return;
            }
        }
        self.net.send(&mut self.rng, self.now, from, to, msg);
    }

    fn is_valid(&mut self, tx: &TransactionRequest) -> bool {
        let d = tx.digest();
        if let Some(v) = self.validity.get(&d) {
            return *v;
        }
        let v = validate(tx, &self.directory);
        self.validity.insert(d, v);
        v
    }

    /// Reports elements of `set` that carry no valid signature.
    fn note_invalid(&mut self, set: &ElementSet) {
        for e in set.iter() {
            let known = self.validity.contains_key(&e.digest);
            if !self.is_valid(&e.tx) && !known {
                self.event("harness", "invalid", &[("tx", e.digest.to_hex())]);
            }
        }
    }

    fn is_honest(&self, r: u16) -> bool {
        self.honest.contains(&ReplicaId(r))
    }

    fn run(mut self) -> RunOutput {
        let max = self.s.schedule.max_ticks;
        let mut quiescent = false;
        while self.now < max {
            self.now += 1;
            self.step();
            if self.finished() {
                quiescent = true;
                break;
            }
        }
        let accepted: Vec<CertifiedBatchTag> = self.logger.accepted().cloned().collect();
        for tag in &accepted {
            self.probe(tag.tag.id, tag.tag.hash, "end");
        }
        for i in 0..self.n as u16 {
            if self.is_honest(i) && !self.replica_idle(i) {
                self.event(&Node::Replica(i).name(), "sbc-stalled", &[]);
            }
        }
        for k in 0..self.subs.len() {
            if !self.subs[k].done && self.subs[k].at <= self.now {
                self.report_sub(k);
            }
        }
        for k in 0..self.sessions.len() {
            if !self.sessions[k].done {
                self.report_session(k);
            }
        }
        let reason = if quiescent { "quiescent" } else { "budget" };
        let end_tick = self.now;
        let logger_csv = self.logger.history_csv(self.n);
        let transcript = std::mem::take(&mut self.w).finish(end_tick, reason, accepted.len());
        RunOutput {
            transcript,
            logger_csv,
            end_tick,
            quiescent,
            accepted: accepted.len(),
        }
    }

    fn step(&mut self) {
        let now = self.now;
        for env in self.net.deliver(&mut self.rng, now) {
            self.handle(env.from, env.to, env.msg);
        }
        for (cert, poster) in self.chain.due(now) {
            self.include(cert, &poster);
        }
        if let Some(decision) = self.oracle.as_mut().and_then(|o| o.on_tick(now)) {
            self.note_invalid(&decision.proposed);
            self.event(
                "oracle",
                "sbc-propose",
                &[("round", decision.round.to_string()), ("set", digest_list(decision.proposed.digests()))],
            );
            for (r, set) in decision.sets {
                let msg = SbcMessage::Decided {
                    round: decision.round,
                    set,
                };
                self.send(Node::Oracle, Node::Replica(r.0), Payload::Decided(msg));
            }
        }
        for i in 0..self.n {
            if self.silent.contains(&(i as u16)) {
                continue;
            }
            match &mut self.replicas[i] {
                Replica::Full(r) => {
                    let step = r.on_tick(now, &self.logger);
                    self.absorb_full(i as u16, step);
                }
                Replica::Sbc(node) => {
                    let step = node.on_tick(now);
                    self.absorb_sbc(i as u16, step);
                }
                Replica::Dac(_) => {}
            }
        }
        if let Some(out) = self.sequencer.as_mut().and_then(|q| q.on_tick(now)) {
            self.sequencer_output(out);
        }
        for k in 0..self.subs.len() {
            if self.subs[k].done || self.subs[k].at > now {
                continue;
            }
            let d = self.subs[k].sub.tx.digest();
            if self.subs[k].invalid && self.subs[k].sub.contacts() == 0 {
                self.validity.insert(d, false);
                self.event("harness", "invalid", &[("tx", d.to_hex())]);
            }
            let included = self.observed(&d);
            let targets = self.subs[k].sub.on_tick(now, included);
            let me = Node::Client(self.subs[k].client);
            for t in targets {
                self.event(&me.name(), "submit", &[("to", t.name()), ("tx", d.to_hex())]);
                let tx = self.subs[k].sub.tx.clone();
                self.send(me, t, Payload::Submit { sub: k, tx });
            }
            if self.subs[k].sub.outcome().is_terminal() {
                self.report_sub(k);
            }
        }
        for k in 0..self.sessions.len() {
            if self.sessions[k].done {
                continue;
            }
            let targets = self.sessions[k].session.on_tick(now);
            let tag = self.sessions[k].session.tag;
            for t in targets {
                self.send(
                    Node::Stf,
                    t,
                    Payload::TranslateReq {
                        session: k,
                        id: tag.id,
                        hash: tag.hash,
                    },
                );
            }
            if *self.sessions[k].session.outcome() != TranslateOutcome::Pending {
                self.report_session(k);
            }
        }
    }

    fn observed(&self, d: &Digest) -> bool {
        match self.s.mode {
            Protocol::Sbc => self.honest.iter().all(|r| match &self.replicas[r.index()] {
                Replica::Sbc(node) => node.is_decided(d),
                _ => false,
            }),
            _ => self.included.contains(d),
        }
    }

    fn report_sub(&mut self, k: usize) {
        self.subs[k].done = true;
        let outcome = match self.subs[k].sub.outcome() {
            SubmitOutcome::Pending => "pending".to_string(),
            SubmitOutcome::Included => "included".to_string(),
            SubmitOutcome::Exhausted => "exhausted".to_string(),
            SubmitOutcome::Rejected(e) => format!("rejected-{}", e.as_str()),
        };
        let me = Node::Client(self.subs[k].client).name();
        let fields = [
            ("tx", self.subs[k].sub.tx.digest().to_hex()),
            ("outcome", outcome),
            ("contacts", self.subs[k].sub.contacts().to_string()),
        ];
        self.event(&me, "client-done", &fields);
    }

    fn report_session(&mut self, k: usize) {
        self.sessions[k].done = true;
        let s = &self.sessions[k].session;
        let result = match s.outcome() {
            TranslateOutcome::Pending => "pending",
            TranslateOutcome::Done(_) => "ok",
            TranslateOutcome::Failed => "failed",
        };
        if let TranslateOutcome::Done(b) = s.outcome() {
            self.included.extend(b.digests());
        }
        let fields = [
            ("id", s.tag.id.to_string()),
            ("hash", s.tag.hash.to_hex()),
            ("contacts", s.contacts().to_string()),
            ("requests", s.requests().to_string()),
            ("rejected", s.rejected().to_string()),
            ("result", result.to_string()),
        ];
        self.event("stf", "stf-done", &fields);
    }

    fn handle(&mut self, from: Node, to: Node, msg: Payload) {
        let now = self.now;
        match (to, msg) {
            (Node::Replica(i), Payload::Submit { sub, tx }) => {
                let d = tx.digest();
                let valid = self.is_valid(&tx);
                let result = match &mut self.replicas[i as usize] {
                    Replica::Full(r) => {
                        let (res, step) = r.add(now, tx);
                        if res.is_ok() {
                            self.event(&to.name(), "sbc-add", &[("tx", d.to_hex())]);
                        }
                        self.absorb_full(i, step);
                        res
                    }
                    Replica::Sbc(node) => {
                        let (taken, step) = node.add(now, tx);
                        if taken {
                            self.event(&to.name(), "sbc-add", &[("tx", d.to_hex())]);
                        }
                        self.absorb_sbc(i, step);
                        match (taken, valid) {
                            (true, _) => Ok(()),
                            (false, false) => Err(AddError::Invalid),
                            (false, true) => Err(AddError::Duplicate),
                        }
                    }
                    Replica::Dac(_) => return,
                };
                self.reply(to, from, sub, d, result);
            }
            (Node::Seq, Payload::Submit { sub, tx }) => {
                let d = tx.digest();
                let Some(q) = self.sequencer.as_mut() else {
                    return;
                };
                let result = q.add(tx);
                self.reply(to, from, sub, d, result);
            }
            (Node::Client(_), Payload::Reply { sub, result }) => {
                self.subs[sub].sub.on_reply(result);
            }
            (Node::Replica(i), Payload::Sbc(m)) => {
                let Node::Replica(j) = from else {
                    return;
                };
                match &mut self.replicas[i as usize] {
                    Replica::Full(r) => {
                        let step = r.on_sbc_message(now, ReplicaId(j), m);
                        self.absorb_full(i, step);
                    }
                    Replica::Sbc(node) => {
                        let step = node.on_message(now, ReplicaId(j), m);
                        self.absorb_sbc(i, step);
                    }
                    Replica::Dac(_) => {}
                }
            }
            (Node::Replica(i), Payload::Decided(m)) => match &mut self.replicas[i as usize] {
                Replica::Full(r) => {
                    let step = r.on_oracle(m);
                    self.absorb_full(i, step);
                }
                Replica::Sbc(node) => {
                    let step = node.on_oracle(m);
                    self.absorb_sbc(i, step);
                }
                Replica::Dac(_) => {}
            },
            (Node::Oracle, Payload::ToOracle(tx)) => {
                if let Some(o) = self.oracle.as_mut() {
                    o.submit(tx);
                }
            }
            (Node::Replica(i), Payload::SigTag(sig)) => {
                if let Replica::Full(r) = &mut self.replicas[i as usize] {
                    r.on_sigtag(&sig);
                }
            }
            (Node::Replica(i), Payload::SignReq(req)) => {
                let Replica::Dac(m) = &mut self.replicas[i as usize] else {
                    return;
                };
                if let Some(resp) = m.on_sign_request(&req) {
                    self.content(&to.name(), &req.batch, req.hash);
                    self.send(to, Node::Seq, Payload::SignResp(resp));
                }
            }
            (Node::Seq, Payload::SignResp(resp)) => {
                if let Some(out) = self.sequencer.as_mut().and_then(|q| q.on_sign_response(now, &resp)) {
                    self.sequencer_output(out);
                }
            }
            (Node::Replica(i), Payload::TranslateReq { session, id, hash }) => {
                let answer = match &self.replicas[i as usize] {
                    Replica::Full(r) => r.translate(id, &hash),
                    Replica::Dac(m) => m.translate(id, &hash),
                    Replica::Sbc(_) => return,
                };
                self.send(to, Node::Stf, Payload::TranslateResp { session, answer });
            }
            (Node::Stf, Payload::TranslateResp { session, answer }) => {
                self.sessions[session].session.on_response(from, answer);
            }
            _ => {}
        }
    }

    fn reply(&mut self, me: Node, client: Node, sub: usize, d: Digest, result: Result<(), AddError>) {
        match result {
            Ok(()) => self.event(&me.name(), "ack", &[("tx", d.to_hex())]),
            Err(e) => self.event(&me.name(), "reject", &[("tx", d.to_hex()), ("reason", e.as_str().into())]),
        }
        self.send(me, client, Payload::Reply { sub, result });
    }

    fn content(&mut self, actor: &str, batch: &Batch, hash: Digest) {
        if !self.content_seen.insert((batch.id, hash)) {
            return;
        }
        let fields = [
            ("id", batch.id.to_string()),
            ("hash", hash.to_hex()),
            ("txs", digest_list(batch.digests())),
        ];
        self.event(actor, "content", &fields);
    }

    fn sequencer_output(&mut self, out: SequencerOutput) {
        match out {
            SequencerOutput::SignRequest(req) => {
                let req = Arc::new(req);
                for j in 0..self.n as u16 {
                    self.send(Node::Seq, Node::Replica(j), Payload::SignReq(req.clone()));
                }
            }
            SequencerOutput::Post(cert) => {
                let honest = self.seq_honest;
                self.post(Node::Seq, honest, cert);
            }
        }
    }

    fn post(&mut self, poster: Node, honest: bool, cert: CertifiedBatchTag) {
        let certified = cert.signers().len() > self.f && verify_aggregate(&cert.tag, &cert.signature, &self.pki);
        let fields = [
            ("id", cert.tag.id.to_string()),
            ("hash", cert.tag.hash.to_hex()),
            ("signers", signer_bitmap(cert.signers().iter().copied(), self.n)),
            ("certified", certified.to_string()),
        ];
        self.event(&poster.name(), "post-submit", &fields);
        if honest {
            self.honest_posts += 1;
        }
        let at = self.now + self.rng.gen_range(1..=self.s.schedule.chain_delay);
        let tag = if honest { "honest" } else { "byzantine" };
        self.chain.submit(at, cert, tag.into());
    }

    fn include(&mut self, cert: CertifiedBatchTag, poster: &str) {
        if poster == "honest" {
            self.honest_posts -= 1;
        }
        let outcome = self.logger.post_at(self.now, cert.clone());
        let fields = [
            ("id", cert.tag.id.to_string()),
            ("hash", cert.tag.hash.to_hex()),
            ("signers", signer_bitmap(cert.signers().iter().copied(), self.n)),
            ("outcome", outcome.to_string()),
        ];
        self.event("logger", "post-result", &fields);
        if !outcome.is_accepted() {
            return;
        }
        self.probe(cert.tag.id, cert.tag.hash, "accept");
        let timeout = self.s.observation_timeout();
        let session = match self.s.clients.translate {
            TranslateStrategy::Optimistic => {
                let signers = cert.signers().iter().map(|r| Node::Replica(r.0)).collect();
                TranslateSession::optimistic(cert.tag, signers, timeout)
            }
            strategy => {
                let n = self.n as u16;
                let start = self.rng.gen_range(0..n);
                let targets = (0..=self.f as u16).map(|j| Node::Replica((start + j) % n)).collect();
                TranslateSession::generic(cert.tag, targets, strategy == TranslateStrategy::Parallel, timeout)
            }
        };
        self.sessions.push(Session {
            done: false,
            session,
        });
    }

    fn probe(&mut self, id: u64, hash: Digest, phase: &str) {
        let honest: Vec<ReplicaId> = self.honest.iter().copied().collect();
        for r in honest {
            let answer = match &self.replicas[r.index()] {
                Replica::Full(x) => x.translate(id, &hash),
                Replica::Dac(x) => x.translate(id, &hash),
                Replica::Sbc(_) => return,
            };
            let result = match answer {
                Translation::Found(b) if b.id == id && hash_batch(&b).ok() == Some(hash) => "ok",
                Translation::Found(_) => "bad-batch",
                other => other.as_str(),
            };
            let fields = [
                ("id", id.to_string()),
                ("hash", hash.to_hex()),
                ("phase", phase.to_string()),
                ("replica", r.to_string()),
                ("result", result.to_string()),
            ];
            self.event("harness", "probe", &fields);
        }
    }

    fn absorb_sbc(&mut self, i: u16, step: SbcStep) {
        let me = Node::Replica(i);
        for a in step.actions {
            self.sbc_action(me, a);
        }
        self.sbc_events(i, &step.proposed, &step.delivered);
    }

    fn sbc_action(&mut self, me: Node, a: SbcAction) {
        match a {
            SbcAction::Broadcast(m) => {
                for j in 0..self.n as u16 {
                    self.send(me, Node::Replica(j), Payload::Sbc(m.clone()));
                }
            }
            SbcAction::Send(to, m) => self.send(me, Node::Replica(to.0), Payload::Sbc(m)),
            SbcAction::ToOracle(tx) => self.send(me, Node::Oracle, Payload::ToOracle(tx)),
        }
    }

    fn sbc_events(&mut self, i: u16, proposed: &[(u64, ElementSet)], delivered: &[crate::sbc::SetDeliver]) {
        let actor = Node::Replica(i).name();
        for (round, set) in proposed {
            self.event(&actor, "sbc-propose", &[("round", round.to_string()), ("set", digest_list(set.digests()))]);
        }
        for d in delivered {
            self.note_invalid(&d.set);
            self.event(&actor, "sbc-deliver", &[("round", d.round.to_string()), ("set", digest_list(d.set.digests()))]);
        }
    }

    fn absorb_full(&mut self, i: u16, step: FullStep) {
        let me = Node::Replica(i);
        let honest = self.is_honest(i);
        for a in step.actions {
            match a {
                FullAction::Sbc(a) => self.sbc_action(me, a),
                FullAction::Gossip(sig) => {
                    for j in 0..self.n as u16 {
                        if j != i {
                            self.send(me, Node::Replica(j), Payload::SigTag(sig.clone()));
                        }
                    }
                }
                FullAction::GossipTo(to, sig) => {
                    if to.0 != i {
                        self.send(me, Node::Replica(to.0), Payload::SigTag(sig));
                    }
                }
                FullAction::Post(cert) => self.post(me, honest, cert),
            }
        }
        self.sbc_events(i, &step.proposed, &step.delivered);
        for (tag, batch) in &step.signed {
            if honest {
                self.max_honest_signed = self.max_honest_signed.max(Some(tag.id));
            }
            self.content(&me.name(), batch, tag.hash);
        }
    }

    fn replica_idle(&self, i: u16) -> bool {
        match &self.replicas[i as usize] {
            Replica::Full(r) => r.is_idle(),
            Replica::Sbc(node) => node.is_idle(),
            Replica::Dac(_) => true,
        }
    }

    fn finished(&self) -> bool {
        if !self.subs.iter().all(|s| s.done) || !self.sessions.iter().all(|s| s.done) {
            return false;
        }
        if !self.net.is_empty() || self.honest_posts > 0 {
            return false;
        }
        if self.oracle.as_ref().is_some_and(|o| !o.is_idle()) {
            return false;
        }
        if !self.honest.iter().all(|r| self.replica_idle(r.0)) {
            return false;
        }
        if let Some(id) = self.max_honest_signed {
            if self.logger.max_contiguous() <= id {
                return false;
            }
        }
        match &self.sequencer {
            Some(q) if self.seq_honest => !q.has_inflight() && q.pending_len() == 0,
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::check::{failing, Property};
    use crate::simnet::scenario::FaultSpec;
    use crate::simnet::transcript::Transcript;

    fn outcome(s: &Scenario) -> (RunOutput, BTreeSet<Property>) {
        let out = run(s).unwrap();
        let t = Transcript::parse(&out.transcript).unwrap();
        let failed = failing(&t);
        (out, failed)
    }

    #[test]
    fn honest_full_run_passes_everything() {
        let s = Scenario::new("full", Protocol::Full, 4, 1).with_seed(3);
        let (out, failed) = outcome(&s);
        assert!(out.quiescent, "{}", out.transcript);
        assert!(out.accepted > 0);
        assert!(failed.is_empty(), "{failed:?}\n{}", out.transcript);
    }

    #[test]
    fn honest_semi_run_passes_everything() {
        let s = Scenario::new("semi", Protocol::Semi, 3, 1).with_seed(5);
        let (out, failed) = outcome(&s);
        assert!(out.quiescent);
        assert!(failed.is_empty(), "{failed:?}\n{}", out.transcript);
    }

    #[test]
    fn same_seed_same_transcript() {
        let mut s = Scenario::new("d", Protocol::Full, 4, 1).with_seed(11);
        s.faults.push(FaultSpec {
            replica: 2,
            behavior: Behavior::Equivocate,
            censor_client: None,
        });
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a.transcript, b.transcript);
        assert_eq!(a.logger_csv, b.logger_csv);
        let c = run(&s.clone().with_seed(12)).unwrap();
        assert_ne!(a.transcript, c.transcript);
    }
}
