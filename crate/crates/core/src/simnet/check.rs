//! Post-hoc property checkers over run transcripts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use super::transcript::{Event, Transcript};
use crate::crypto::Digest;
use crate::error::DecodeError;
use crate::sbc::props::{self, SbcProperty, SbcTrace};
use crate::types::ReplicaId;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Property {
    Legality,
    UniqueBatch,
    Termination,
    Availability,
    ExactlyOnce,
    Sbc(SbcProperty),
}

impl Property {
    pub const ARRANGER: [Property; 5] = [
        Property::Legality,
        Property::UniqueBatch,
        Property::Termination,
        Property::Availability,
        Property::ExactlyOnce,
    ];

    pub fn all() -> Vec<Property> {
        Self::ARRANGER
            .into_iter()
            .chain(SbcProperty::ALL.into_iter().map(Property::Sbc))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::Legality => "legality",
            Property::UniqueBatch => "unique-batch",
            Property::Termination => "termination",
            Property::Availability => "availability",
            Property::ExactlyOnce => "exactly-once",
            Property::Sbc(p) => p.name(),
        }
    }

    /// Properties that apply to runs of `mode`.
    pub fn applicable(mode: &str) -> Vec<Property> {
        let sbc = SbcProperty::ALL.into_iter().map(Property::Sbc);
        match mode {
            "semi" => Self::ARRANGER.to_vec(),
            "sbc" => sbc.collect(),
            _ => Self::all(),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::all()
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown property {s:?}"))
    }
}

/// A failed check with the events that witness it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub property: Property,
    pub reason: String,
    pub witness: Vec<Event>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.property, self.reason)?;
        for e in &self.witness {
            write!(f, "\n  {}", e.to_line())?;
        }
        Ok(())
    }
}

impl std::error::Error for Violation {}

pub fn check(t: &Transcript, p: Property) -> Result<(), Violation> {
    let fail = |reason: String, witness: Vec<&Event>| Violation {
        property: p,
        reason,
        witness: witness.into_iter().cloned().collect(),
    };
    let view = View::build(t).map_err(|e| fail(format!("malformed transcript: {e}"), vec![]))?;
    let r = match p {
        Property::Legality => legality(&view),
        Property::UniqueBatch => unique_batch(&view),
        Property::Termination => termination(&view),
        Property::Availability => availability(&view),
        Property::ExactlyOnce => exactly_once(&view),
        Property::Sbc(sp) => match sbc_trace(t) {
            Ok(trace) => props::check(&trace, sp).map_err(|m| (m, vec![])),
            Err(e) => Err((e.to_string(), vec![])),
        },
    };
    r.map_err(|(reason, witness)| fail(reason, witness))
}

/// Applicable properties that fail on `t`.
pub fn failing(t: &Transcript) -> BTreeSet<Property> {
    Property::applicable(&t.meta.mode)
        .into_iter()
        .filter(|p| check(t, *p).is_err())
        .collect()
}

type Outcome<'a> = Result<(), (String, Vec<&'a Event>)>;

struct Accepted<'a> {
    id: u64,
    hash: Digest,
    event: &'a Event,
}

struct View<'a> {
    t: &'a Transcript,
    accepted: Vec<Accepted<'a>>,
    content: BTreeMap<(u64, Digest), (Vec<Digest>, &'a Event)>,
    invalid: BTreeSet<Digest>,
}

impl<'a> View<'a> {
    fn build(t: &'a Transcript) -> Result<Self, DecodeError> {
        let mut accepted = Vec::new();
        for e in t.events_of("post-result") {
            if e.get("outcome")? == "accepted" {
                accepted.push(Accepted {
                    id: e.u64("id")?,
                    hash: e.digest("hash")?,
                    event: e,
                });
            }
        }
        accepted.sort_by_key(|a| a.id);
        let mut content = BTreeMap::new();
        for e in t.events_of("content") {
            content
                .entry((e.u64("id")?, e.digest("hash")?))
                .or_insert((e.digests("txs")?, e));
        }
        let invalid = t
            .events_of("invalid")
            .map(|e| e.digest("tx"))
            .collect::<Result<_, _>>()?;
        Ok(View {
            t,
            accepted,
            content,
            invalid,
        })
    }

    fn batch(&self, a: &Accepted<'a>) -> Option<&(Vec<Digest>, &'a Event)> {
        self.content.get(&(a.id, a.hash))
    }

    /// Requests acknowledged by an honest replica, or by the sequencer.
    fn acked(&self) -> BTreeMap<Digest, &'a Event> {
        let mut out = BTreeMap::new();
        for e in self.t.events_of("ack") {
            let counts = match e.replica() {
                Some(r) => self.t.meta.mode != "semi" && self.t.honest.contains(&r),
                None => e.actor == "seq",
            };
            if counts {
                if let Ok(d) = e.digest("tx") {
                    out.entry(d).or_insert(e);
                }
            }
        }
        out
    }

    fn included(&self) -> BTreeSet<Digest> {
        self.accepted
            .iter()
            .filter_map(|a| self.batch(a))
            .flat_map(|(txs, _)| txs.iter().copied())
            .collect()
    }
}

fn legality<'a>(v: &View<'a>) -> Outcome<'a> {
    let mut earlier: BTreeMap<Digest, &Event> = BTreeMap::new();
    for a in &v.accepted {
        let Some((txs, content)) = v.batch(a) else {
            return Err((
                format!("accepted tag {} has no known batch", a.id),
                vec![a.event],
            ));
        };
        let mut within = BTreeSet::new();
        for d in txs {
            if v.invalid.contains(d) {
                return Err((
                    format!("batch {} contains invalid request {d}", a.id),
                    vec![a.event, content],
                ));
            }
            if !within.insert(*d) {
                return Err((
                    format!("batch {} contains request {d} twice", a.id),
                    vec![a.event, content],
                ));
            }
            if let Some(prev) = earlier.get(d) {
                return Err((
                    format!("request {d} of batch {} was already batched", a.id),
                    vec![prev, a.event, content],
                ));
            }
        }
        for d in txs {
            earlier.insert(*d, a.event);
        }
    }
    Ok(())
}

fn unique_batch<'a>(v: &View<'a>) -> Outcome<'a> {
    let mut first: BTreeMap<u64, (Digest, &Event)> = BTreeMap::new();
    let certified = v
        .t
        .events_of("post-submit")
        .filter(|e| e.fields.get("certified").map(String::as_str) == Some("true"));
    for e in certified.chain(v.accepted.iter().map(|a| a.event)) {
        let (id, hash) = (
            e.u64("id").map_err(|m| (m.to_string(), vec![e]))?,
            e.digest("hash").map_err(|m| (m.to_string(), vec![e]))?,
        );
        match first.get(&id) {
            None => {
                first.insert(id, (hash, e));
            }
            Some((h, prev)) if *h != hash => {
                return Err((
                    format!("identifier {id} certified with two hashes"),
                    vec![prev, e],
                ));
            }
            _ => {}
        }
    }
    Ok(())
}

fn termination<'a>(v: &View<'a>) -> Outcome<'a> {
    let included = v.included();
    match v.acked().into_iter().find(|(d, _)| !included.contains(d)) {
        Some((d, e)) => Err((format!("acknowledged request {d} never included"), vec![e])),
        None => Ok(()),
    }
}

fn availability<'a>(v: &View<'a>) -> Outcome<'a> {
    let mut ok: BTreeSet<(u64, Digest, &str)> = BTreeSet::new();
    for e in v.t.events_of("probe") {
        let honest = e
            .fields
            .get("replica")
            .and_then(|r| super::transcript::parse_replica(r))
            .is_some_and(|r| v.t.honest.contains(&r));
        if honest && e.fields.get("result").map(String::as_str) == Some("ok") {
            let phase = e.fields.get("phase").map_or("", String::as_str);
            if let (Ok(id), Ok(h)) = (e.u64("id"), e.digest("hash")) {
                ok.insert((id, h, phase));
            }
        }
    }
    for a in &v.accepted {
        for phase in ["accept", "end"] {
            if !ok.contains(&(a.id, a.hash, phase)) {
                return Err((
                    format!("no honest replica translated tag {} at {phase}", a.id),
                    vec![a.event],
                ));
            }
        }
    }
    if let Some(e) = v
        .t
        .events_of("stf-done")
        .find(|e| e.fields.get("result").map(String::as_str) == Some("failed"))
    {
        return Err(("translation client gave up".into(), vec![e]));
    }
    Ok(())
}

fn exactly_once<'a>(v: &View<'a>) -> Outcome<'a> {
    let mut seen: BTreeMap<Digest, &Event> = BTreeMap::new();
    for a in &v.accepted {
        let Some((txs, _)) = v.batch(a) else {
            continue;
        };
        for d in txs {
            if let Some(prev) = seen.insert(*d, a.event) {
                return Err((format!("request {d} included twice"), vec![prev, a.event]));
            }
        }
    }
    if v.t.meta.quorum {
        if let Some((d, e)) = v.acked().into_iter().find(|(d, _)| !seen.contains_key(d)) {
            return Err((format!("acknowledged request {d} never included"), vec![e]));
        }
    }
    Ok(())
}

/// The SBC-level trace recorded in `t`.
pub fn sbc_trace(t: &Transcript) -> Result<SbcTrace, DecodeError> {
    let mut trace = SbcTrace {
        honest: t.honest.clone(),
        ..SbcTrace::default()
    };
    for e in &t.events {
        match e.kind.as_str() {
            "sbc-add" => {
                if let Some(r) = e.replica() {
                    trace.added.entry(r).or_default().insert(e.digest("tx")?);
                }
            }
            "sbc-propose" => {
                trace
                    .proposed
                    .entry(e.u64("round")?)
                    .or_default()
                    .extend(e.digests("set")?);
            }
            "sbc-deliver" => {
                if let Some(r) = e.replica() {
                    trace
                        .decided
                        .entry(r)
                        .or_default()
                        .push((e.u64("round")?, e.digests("set")?));
                }
            }
            "sbc-stalled" => {
                if let Some(r) = e.replica() {
                    trace.stalled.insert(r);
                }
            }
            "invalid" => {
                trace.invalid.insert(e.digest("tx")?);
            }
            _ => {}
        }
    }
    trace.stalled.retain(|r: &ReplicaId| t.honest.contains(r));
    Ok(trace)
}
