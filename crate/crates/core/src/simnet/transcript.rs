//! Run transcripts.
//!
//! A transcript is UTF-8 text, one record per line:
//!
//! ```text
//! arranger-transcript 1
//! scenario <hex of the scenario TOML>
//! meta name=<name> mode=<semi|full|sbc> n=<n> f=<f> seed=<seed> engine=<engine> quorum=<bool>
//! honest <replica> <replica> ...
//! sequencer <honest|byzantine>
//! <tick> <actor> <event> <key>=<value> ...
//! ...
//! end tick=<tick> reason=<quiescent|budget> accepted=<count>
//! ```
//!
//! Actors are `r<i>` (replica or DAC member), `seq`, `oracle`, `c<i>`
//! (user), `stf`, `logger` and `harness`. Digests are lowercase hex; digest
//! lists are comma separated (`-` when empty); signer sets are bitmaps over
//! replica indices. Event kinds:
//!
//! | event          | fields                                              |
//! |----------------|-----------------------------------------------------|
//! | `invalid`      | `tx`                                                |
//! | `submit`       | `to tx`                                             |
//! | `ack`          | `tx`                                                |
//! | `reject`       | `tx reason`                                         |
//! | `sbc-add`      | `tx`                                                |
//! | `sbc-propose`  | `round set`                                         |
//! | `sbc-deliver`  | `round set`                                         |
//! | `sbc-stalled`  |                                                     |
//! | `content`      | `id hash txs` (request digests in batch order)      |
//! | `post-submit`  | `id hash signers certified`                         |
//! | `post-result`  | `id hash signers outcome`                           |
//! | `probe`        | `id hash phase replica result`                      |
//! | `stf-done`     | `id hash contacts requests rejected result`         |
//! | `client-done`  | `tx outcome contacts`                               |
//!
//! The `scenario` line makes a transcript self-contained: re-running the
//! embedded scenario reproduces the file byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::crypto::Digest;
use crate::error::DecodeError;
use crate::types::ReplicaId;

pub const MAGIC: &str = "arranger-transcript";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Meta {
    pub name: String,
    pub mode: String,
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub engine: String,
    /// Whether the run met the honest-quorum assumption of its mode.
    pub quorum: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub tick: u64,
    pub actor: String,
    pub kind: String,
    pub fields: BTreeMap<String, String>,
}

impl Event {
    pub fn get(&self, key: &str) -> Result<&str, DecodeError> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| DecodeError::Malformed(format!("{} event lacks {key}", self.kind)))
    }

    pub fn u64(&self, key: &str) -> Result<u64, DecodeError> {
        self.get(key)?
            .parse()
            .map_err(|_| DecodeError::Malformed(format!("{key} is not an integer")))
    }

    pub fn digest(&self, key: &str) -> Result<Digest, DecodeError> {
        Digest::from_hex(self.get(key)?)
    }

    pub fn digests(&self, key: &str) -> Result<Vec<Digest>, DecodeError> {
        parse_digest_list(self.get(key)?)
    }

    /// The event as a transcript line.
    pub fn to_line(&self) -> String {
        let mut out = format!("{} {} {}", self.tick, self.actor, self.kind);
        for (k, v) in &self.fields {
            let _ = write!(out, " {k}={v}");
        }
        out
    }

    /// Replica index if the actor is `r<i>`.
    pub fn replica(&self) -> Option<ReplicaId> {
        parse_replica(&self.actor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    pub scenario_toml: String,
    pub meta: Meta,
    pub honest: BTreeSet<ReplicaId>,
    pub sequencer_honest: bool,
    pub events: Vec<Event>,
    pub end_tick: u64,
    pub end_reason: String,
}

impl Transcript {
    pub fn events_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn parse(text: &str) -> Result<Self, DecodeError> {
        let bad = |m: &str| DecodeError::Malformed(m.to_string());
        let mut lines = text.lines();
        let head = lines.next().ok_or(DecodeError::Empty)?;
        let version = head
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad("missing transcript header"))?;
        if version != VERSION.to_string() {
            return Err(DecodeError::Version(version.parse().unwrap_or(0)));
        }
        let scenario_hex = lines
            .next()
            .and_then(|l| l.strip_prefix("scenario "))
            .ok_or_else(|| bad("missing scenario line"))?;
        let scenario_toml = String::from_utf8(
            hex::decode(scenario_hex).map_err(|_| DecodeError::BadHex(scenario_hex.into()))?,
        )
        .map_err(|_| bad("scenario is not UTF-8"))?;
        let meta_line = lines
            .next()
            .and_then(|l| l.strip_prefix("meta "))
            .ok_or_else(|| bad("missing meta line"))?;
        let m = parse_fields(meta_line.split(' '))?;
        let field = |k: &str| m.get(k).cloned().ok_or_else(|| bad(&format!("meta lacks {k}")));
        let num = |k: &str| -> Result<u64, DecodeError> {
            field(k)?.parse().map_err(|_| bad(&format!("meta {k} not a number")))
        };
        let meta = Meta {
            name: field("name")?,
            mode: field("mode")?,
            n: num("n")? as usize,
            f: num("f")? as usize,
            seed: num("seed")?,
            engine: field("engine")?,
            quorum: field("quorum")? == "true",
        };
        let honest_line = lines
            .next()
            .and_then(|l| l.strip_prefix("honest"))
            .ok_or_else(|| bad("missing honest line"))?;
        let honest = honest_line
            .split_whitespace()
            .map(|r| parse_replica(r).ok_or_else(|| bad("bad replica in honest line")))
            .collect::<Result<_, _>>()?;
        let sequencer_honest = match lines.next().and_then(|l| l.strip_prefix("sequencer ")) {
            Some("honest") => true,
            Some("byzantine") => false,
            _ => return Err(bad("missing sequencer line")),
        };
        let mut events = Vec::new();
        let mut end = None;
        for line in lines {
            if let Some(rest) = line.strip_prefix("end ") {
                let f = parse_fields(rest.split(' '))?;
                let tick = f
                    .get("tick")
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad("end lacks tick"))?;
                let reason = f.get("reason").cloned().unwrap_or_default();
                end = Some((tick, reason));
                continue;
            }
            if end.is_some() {
                return Err(bad("records after end"));
            }
            let mut parts = line.split(' ');
            let tick = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(&format!("bad event line {line:?}")))?;
            let actor = parts.next().ok_or_else(|| bad("event lacks actor"))?;
            let kind = parts.next().ok_or_else(|| bad("event lacks kind"))?;
            events.push(Event {
                tick,
                actor: actor.to_string(),
                kind: kind.to_string(),
                fields: parse_fields(parts)?,
            });
        }
        let (end_tick, end_reason) = end.ok_or_else(|| bad("transcript has no end record"))?;
        Ok(Transcript {
            scenario_toml,
            meta,
            honest,
            sequencer_honest,
            events,
            end_tick,
            end_reason,
        })
    }
}

fn parse_fields<'a>(parts: impl Iterator<Item = &'a str>) -> Result<BTreeMap<String, String>, DecodeError> {
    let mut out = BTreeMap::new();
    for p in parts.filter(|p| !p.is_empty()) {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| DecodeError::Malformed(format!("field {p:?} lacks '='")))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}

pub fn parse_replica(s: &str) -> Option<ReplicaId> {
    s.strip_prefix('r')?.parse().ok().map(ReplicaId)
}

pub fn parse_digest_list(s: &str) -> Result<Vec<Digest>, DecodeError> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',').map(Digest::from_hex).collect()
}

pub fn digest_list<I: IntoIterator<Item = Digest>>(ds: I) -> String {
    let mut out = String::new();
    for d in ds {
        if !out.is_empty() {
            out.push(',');
        }
        out.push_str(&d.to_hex());
    }
    if out.is_empty() {
        out.push('-');
    }
    out
}

/// Accumulates transcript text.
#[derive(Debug, Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new(scenario_toml: &str, meta: &Meta, honest: &BTreeSet<ReplicaId>, seq_honest: bool) -> Self {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "scenario {}", hex::encode(scenario_toml));
        let _ = writeln!(
            out,
            "meta name={} mode={} n={} f={} seed={} engine={} quorum={}",
            meta.name, meta.mode, meta.n, meta.f, meta.seed, meta.engine, meta.quorum
        );
        out.push_str("honest");
        for r in honest {
            let _ = write!(out, " {r}");
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "sequencer {}",
            if seq_honest { "honest" } else { "byzantine" }
        );
        Writer { out }
    }

    pub fn event(&mut self, tick: u64, actor: &str, kind: &str, fields: &[(&str, String)]) {
        let _ = write!(self.out, "{tick} {actor} {kind}");
        for (k, v) in fields {
            let _ = write!(self.out, " {k}={v}");
        }
        self.out.push('\n');
    }

    pub fn finish(mut self, tick: u64, reason: &str, accepted: usize) -> String {
        let _ = writeln!(self.out, "end tick={tick} reason={reason} accepted={accepted}");
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::sha256;

    #[test]
    fn write_then_parse() {
        let meta = Meta {
            name: "t".into(),
            mode: "full".into(),
            n: 4,
            f: 1,
            seed: 3,
            engine: "reference".into(),
            quorum: true,
        };
        let honest: BTreeSet<_> = [ReplicaId(0), ReplicaId(2)].into();
        let mut w = Writer::new("name = \"t\"\n", &meta, &honest, true);
        let d = sha256(&[b"a"]);
        w.event(5, "r0", "sbc-deliver", &[("round", "0".into()), ("set", digest_list([d, d]))]);
        w.event(6, "r2", "sbc-deliver", &[("round", "1".into()), ("set", digest_list([]))]);
        let text = w.finish(9, "quiescent", 0);
        let t = Transcript::parse(&text).unwrap();
        assert_eq!(t.meta, meta);
        assert_eq!(t.honest, honest);
        assert_eq!(t.scenario_toml, "name = \"t\"\n");
        assert_eq!(t.events.len(), 2);
        assert_eq!(t.events[0].digests("set").unwrap(), vec![d, d]);
        assert!(t.events[1].digests("set").unwrap().is_empty());
        assert_eq!(t.events[1].replica(), Some(ReplicaId(2)));
        assert_eq!((t.end_tick, t.end_reason.as_str()), (9, "quiescent"));
    }

    #[test]
    fn rejects_damaged_files() {
        assert!(Transcript::parse("").is_err());
        assert!(Transcript::parse("arranger-transcript 2\n").is_err());
        let meta = Meta {
            name: "t".into(),
            mode: "semi".into(),
            n: 3,
            f: 1,
            seed: 0,
            engine: "reference".into(),
            quorum: false,
        };
        let text = Writer::new("", &meta, &BTreeSet::new(), false).finish(1, "budget", 0);
        assert!(Transcript::parse(&text).is_ok());
        let truncated = text.replace("end tick=1 reason=budget accepted=0\n", "");
        assert!(Transcript::parse(&truncated).is_err());
    }
}
