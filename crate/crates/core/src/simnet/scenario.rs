//! Scenario files.
//!
//! A scenario is a TOML document. Only `name`, `mode`, `n` and `f` are
//! required; every section has defaults.
//!
//! ```toml
//! name = "full-n4-silent"
//! mode = "full"              # semi | full | sbc
//! n = 4
//! f = 1
//! seed = 7                   # overridden by --seed
//! engine = "reference"       # reference | oracle (SBC engine, full and sbc modes)
//! scheme = "ed25519"         # ed25519 | bls (tag signatures)
//! honest_minority = false    # semi only: allow f >= n/2
//! turn_slice = 10            # full only: ticks per posting turn
//!
//! [batch]                    # semi sequencer
//! max_pending = 16
//! timeout_ticks = 20
//!
//! [schedule]
//! gst = 100                  # global stabilization tick
//! pre_gst_max = 40           # delays before GST: uniform in [1, pre_gst_max]
//! delta = 4                  # delays after GST: uniform in [1, delta]
//! chain_delay = 3            # L1 inclusion delay: uniform in [1, chain_delay]
//! max_ticks = 20000          # tick budget
//!
//! [sbc]
//! timeout_base = 30
//! timeout_step = 15
//! oracle_period = 8
//!
//! [workload]
//! clients = 3
//! txs_per_client = 4
//! interval = 5               # mean ticks between one client's requests
//! start = 1
//! payload_bytes = 16
//! invalid = 0                # extra requests with broken signatures
//! duplicates = 0             # re-submissions of earlier requests
//! spread = 0                 # sbc mode: replicas each element is added at (0 = all)
//!
//! [clients]
//! strategy = "sequential"    # parallel | sequential
//! retry_budget = 0           # 0 = f + 1
//! observation_timeout = 0    # 0 = 2 * turn_slice * n
//! translate = "optimistic"   # optimistic | sequential | parallel
//!
//! [[faults]]                 # at most f entries
//! replica = 3
//! behavior = "silent"        # silent | equivocate | wrong-hash | censor | spam-posts | wrong-translate
//! censor_client = 0          # censor: the client whose requests are censored
//!
//! [sequencer]                # semi only
//! behavior = "honest"        # honest | withhold | wrong-hash | censor | reuse-id
//! censor_client = 0
//!
//! [sabotage]                 # deliberately planted violations
//! oracle = "none"            # none | duplicate-decision | disagree | invalid-element
//! dedup_off = false          # replicas skip the cross-batch duplicate filter
//! amnesia = false            # replicas and DAC members forget built batches
//! conflict_post = []         # colluders that certify a second tag for id 0
//!
//! [expect]
//! fail = []                  # properties expected to fail
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::check::Property;
use crate::clients::Strategy;
use crate::config::{BatchPolicy, Mode, SystemConfig};
use crate::crypto::Scheme;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Semi,
    Full,
    /// SBC replicas alone, no arranger on top.
    Sbc,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Semi => "semi",
            Protocol::Full => "full",
            Protocol::Sbc => "sbc",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Reference,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    Silent,
    Equivocate,
    WrongHash,
    Censor,
    SpamPosts,
    WrongTranslate,
}

impl Behavior {
    pub const ALL: [Behavior; 6] = [
        Behavior::Silent,
        Behavior::Equivocate,
        Behavior::WrongHash,
        Behavior::Censor,
        Behavior::SpamPosts,
        Behavior::WrongTranslate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Silent => "silent",
            Behavior::Equivocate => "equivocate",
            Behavior::WrongHash => "wrong-hash",
            Behavior::Censor => "censor",
            Behavior::SpamPosts => "spam-posts",
            Behavior::WrongTranslate => "wrong-translate",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequencerKind {
    #[default]
    Honest,
    Withhold,
    WrongHash,
    Censor,
    ReuseId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleSabotageKind {
    #[default]
    None,
    DuplicateDecision,
    Disagree,
    InvalidElement,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranslateStrategy {
    #[default]
    Optimistic,
    Sequential,
    Parallel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub gst: u64,
    pub pre_gst_max: u64,
    pub delta: u64,
    pub chain_delay: u64,
    pub max_ticks: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            gst: 100,
            pre_gst_max: 40,
            delta: 4,
            chain_delay: 3,
            max_ticks: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbcTiming {
    pub timeout_base: u64,
    pub timeout_step: u64,
    pub oracle_period: u64,
}

impl Default for SbcTiming {
    fn default() -> Self {
        SbcTiming {
            timeout_base: 30,
            timeout_step: 15,
            oracle_period: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    pub clients: u64,
    pub txs_per_client: u64,
    pub interval: u64,
    pub start: u64,
    pub payload_bytes: usize,
    pub invalid: u64,
    pub duplicates: u64,
    pub spread: usize,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            clients: 3,
            txs_per_client: 4,
            interval: 5,
            start: 1,
            payload_bytes: 16,
            invalid: 0,
            duplicates: 0,
            spread: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientSettings {
    pub strategy: Strategy,
    pub retry_budget: usize,
    pub observation_timeout: u64,
    pub translate: TranslateStrategy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub replica: u16,
    pub behavior: Behavior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub censor_client: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequencerSpec {
    pub behavior: SequencerKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censor_client: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sabotage {
    pub oracle: OracleSabotageKind,
    pub dedup_off: bool,
    pub amnesia: bool,
    pub conflict_post: Vec<u16>,
}

impl Sabotage {
    pub fn any(&self) -> bool {
        *self != Sabotage::default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expect {
    pub fail: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Protocol,
    pub n: usize,
    pub f: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub honest_minority: bool,
    #[serde(default = "default_turn_slice")]
    pub turn_slice: u64,
    #[serde(default)]
    pub batch: BatchPolicy,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub sbc: SbcTiming,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub clients: ClientSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub sequencer: SequencerSpec,
    #[serde(default)]
    pub sabotage: Sabotage,
    #[serde(default)]
    pub expect: Expect,
}

fn default_scheme() -> Scheme {
    Scheme::Ed25519
}

fn default_turn_slice() -> u64 {
    10
}

impl Scenario {
    /// A minimal valid scenario with all defaults.
    pub fn new(name: &str, mode: Protocol, n: usize, f: usize) -> Self {
        Scenario {
            name: name.to_string(),
            mode,
            n,
            f,
            seed: 0,
            engine: Engine::Reference,
            scheme: default_scheme(),
            honest_minority: false,
            turn_slice: default_turn_slice(),
            batch: BatchPolicy::default(),
            schedule: Schedule::default(),
            sbc: SbcTiming::default(),
            workload: Workload::default(),
            clients: ClientSettings::default(),
            faults: Vec::new(),
            sequencer: SequencerSpec::default(),
            sabotage: Sabotage::default(),
            expect: Expect::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario always serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn system_config(&self) -> SystemConfig {
        let mut cfg = match self.mode {
            Protocol::Semi => SystemConfig::semi(self.n, self.f),
            Protocol::Full | Protocol::Sbc => SystemConfig::full(self.n, self.f),
        };
        cfg.mode = match self.mode {
            Protocol::Semi => Mode::Semi,
            _ => Mode::Full,
        };
        cfg.honest_minority = self.honest_minority;
        cfg.batch = self.batch;
        cfg.turn_slice = self.turn_slice;
        cfg.scheme = self.scheme;
        cfg
    }

    pub fn retry_budget(&self) -> usize {
        match self.clients.retry_budget {
            0 => self.f + 1,
            k => k,
        }
    }

    pub fn observation_timeout(&self) -> u64 {
        match self.clients.observation_timeout {
            0 => crate::clients::ClientPolicy::default_timeout(self.turn_slice, self.n),
            t => t,
        }
    }

    /// Replicas following a fault script or colluding in a sabotage.
    pub fn byzantine(&self) -> BTreeSet<u16> {
        self.faults
            .iter()
            .map(|f| f.replica)
            .chain(self.sabotage.conflict_post.iter().copied())
            .collect()
    }

    pub fn expected_failures(&self) -> Result<BTreeSet<Property>, ScenarioError> {
        self.expect
            .fail
            .iter()
            .map(|s| s.parse::<Property>().map_err(ScenarioError::Invalid))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        self.system_config()
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        if self.mode == Protocol::Sbc && 3 * self.f >= self.n {
            return bad(format!("sbc mode requires f < n/3 (n={}, f={})", self.n, self.f));
        }
        if self.n > u16::MAX as usize {
            return bad("too many replicas".into());
        }
        let mut seen = BTreeSet::new();
        for fs in &self.faults {
            if fs.replica as usize >= self.n {
                return bad(format!("fault on unknown replica {}", fs.replica));
            }
            if !seen.insert(fs.replica) {
                return bad(format!("replica {} has two fault scripts", fs.replica));
            }
            if fs.behavior == Behavior::Censor && fs.censor_client.is_none() {
                return bad(format!("censor fault on {} needs censor_client", fs.replica));
            }
            if self.mode == Protocol::Semi
                && !matches!(fs.behavior, Behavior::Silent | Behavior::WrongTranslate)
            {
                return bad(format!(
                    "DAC members support silent and wrong-translate only, not {}",
                    fs.behavior.name()
                ));
            }
        }
        for c in &self.sabotage.conflict_post {
            if *c as usize >= self.n || seen.contains(c) {
                return bad(format!("bad conflict_post colluder {c}"));
            }
        }
        if !self.sabotage.conflict_post.is_empty() && self.sabotage.conflict_post.len() <= self.f {
            return bad("conflict_post needs more than f colluders".into());
        }
        let limit = if self.mode == Protocol::Semi && self.honest_minority {
            self.n
        } else {
            self.f
        };
        if self.faults.len() > limit {
            return bad(format!("{} faults exceed f={}", self.faults.len(), self.f));
        }
        if self.sabotage.oracle != OracleSabotageKind::None && self.engine != Engine::Oracle {
            return bad("oracle sabotage requires engine = \"oracle\"".into());
        }
        if self.mode == Protocol::Semi
            && self.sequencer.behavior == SequencerKind::Censor
            && self.sequencer.censor_client.is_none()
        {
            return bad("censoring sequencer needs censor_client".into());
        }
        let s = &self.schedule;
        if s.pre_gst_max == 0 || s.delta == 0 || s.chain_delay == 0 || s.max_ticks == 0 {
            return bad("schedule delays and budget must be positive".into());
        }
        if self.workload.interval == 0 {
            return bad("workload.interval must be positive".into());
        }
        self.expected_failures()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::parse("name = \"x\"\nmode = \"full\"\nn = 4\nf = 1\n").unwrap();
        assert_eq!(s.schedule, Schedule::default());
        assert_eq!(s.retry_budget(), 2);
        assert_eq!(s.observation_timeout(), 80);
        assert_eq!(Scenario::parse(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn rejects_inconsistent_files() {
        for text in [
            "name = \"x\"\nmode = \"full\"\nn = 3\nf = 1\n",
            "name = \"x\"\nmode = \"full\"\nn = 4\nf = 1\nbogus = 1\n",
            "name = \"x\"\nmode = \"full\"\nn = 4\nf = 1\n[[faults]]\nreplica = 1\nbehavior = \"silent\"\n[[faults]]\nreplica = 2\nbehavior = \"silent\"\n",
            "name = \"x\"\nmode = \"semi\"\nn = 3\nf = 1\n[[faults]]\nreplica = 1\nbehavior = \"equivocate\"\n",
            "name = \"x\"\nmode = \"full\"\nn = 4\nf = 1\n[sabotage]\noracle = \"disagree\"\n",
            "name = \"x\"\nmode = \"full\"\nn = 4\nf = 1\n[expect]\nfail = [\"nope\"]\n",
        ] {
            assert!(Scenario::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn honest_minority_semi() {
        let text = "name = \"m\"\nmode = \"semi\"\nn = 5\nf = 3\nhonest_minority = true\n\
            [[faults]]\nreplica = 0\nbehavior = \"silent\"\n\
            [[faults]]\nreplica = 1\nbehavior = \"silent\"\n\
            [[faults]]\nreplica = 2\nbehavior = \"silent\"\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.byzantine().len(), 3);
    }
}
