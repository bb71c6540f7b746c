//! Multi-seed sweeps over scenario sets.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::check::{failing, Property};
use super::metrics::Metrics;
use super::runner::run;
use super::scenario::{Scenario, ScenarioError};
use super::transcript::Transcript;

/// Outcome of one scenario at one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub scenario: String,
    pub seed: u64,
    pub expected: BTreeSet<Property>,
    pub failing: BTreeSet<Property>,
    pub quiescent: bool,
    pub end_tick: u64,
    pub accepted: usize,
    pub metrics: Metrics,
}

impl SweepRow {
    /// True when exactly the expected properties failed.
    pub fn ok(&self) -> bool {
        self.expected == self.failing
    }
}

/// Loads every `*.toml` file in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<(PathBuf, Scenario)>, ScenarioError> {
    let io = |source| ScenarioError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()).map_err(io))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "toml"));
    paths.sort();
    paths
        .into_iter()
        .map(|p| Scenario::load(&p).map(|s| (p, s)))
        .collect()
}

/// Runs each scenario at seeds `seed, seed + 1, ..., seed + seeds - 1` on
/// `workers` threads. Rows come back in scenario then seed order.
pub fn sweep(scenarios: &[Scenario], seeds: u64, workers: usize) -> Result<Vec<SweepRow>, ScenarioError> {
    let jobs: Vec<(usize, u64)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..seeds).map(move |k| (i, s.seed.wrapping_add(k))))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRow, ScenarioError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some((i, seed)) = jobs.get(j).copied() else {
                    break;
                };
                let row = run_one(&scenarios[i], seed);
                results.lock().unwrap()[j] = Some(row);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn run_one(s: &Scenario, seed: u64) -> Result<SweepRow, ScenarioError> {
    let s = s.clone().with_seed(seed);
    let out = run(&s)?;
    let t = Transcript::parse(&out.transcript).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    Ok(SweepRow {
        scenario: s.name.clone(),
        seed,
        expected: s.expected_failures()?,
        failing: failing(&t),
        quiescent: out.quiescent,
        end_tick: out.end_tick,
        accepted: out.accepted,
        metrics: Metrics::of(&t),
    })
}

fn names(set: &BTreeSet<Property>) -> String {
    set.iter().map(|p| p.name()).collect::<Vec<_>>().join(";")
}

/// CSV report, one row per run.
pub fn csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "scenario,seed,ok,expected,failing,end,ticks,accepted,latency_max,latency_mean,client_contacts_max,stf_contacts_max,wait_rounds_max\n",
    );
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.1},{},{},{}\n",
            r.scenario,
            r.seed,
            r.ok(),
            names(&r.expected),
            names(&r.failing),
            if r.quiescent { "quiescent" } else { "budget" },
            r.end_tick,
            r.accepted,
            m.latency_max,
            m.latency_mean,
            m.client_contacts_max,
            m.stf_contacts_max,
            m.wait_rounds_max
        ));
    }
    out
}
