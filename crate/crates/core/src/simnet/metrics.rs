//! Measurements derived from a transcript: inclusion latency, contact
//! counts and how many decided rounds an element waited for.

use std::collections::{BTreeMap, HashMap};

use super::transcript::Transcript;
use crate::crypto::Digest;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    /// Requests that reached `included`.
    pub included: usize,
    /// Ticks from a request's first submission to its inclusion.
    pub latency_max: u64,
    pub latency_mean: f64,
    /// Replicas contacted by one client request.
    pub client_contacts_max: u64,
    /// Replicas contacted by one STF translation.
    pub stf_contacts_max: u64,
    /// Decided rounds at a replica, from adding an element up to and
    /// including the round that carried it.
    pub wait_rounds_max: u64,
}

impl Metrics {
    pub fn of(t: &Transcript) -> Metrics {
        let mut m = Metrics::default();
        let mut first_submit: HashMap<String, u64> = HashMap::new();
        for e in t.events_of("submit") {
            if let Ok(tx) = e.get("tx") {
                first_submit.entry(tx.to_string()).or_insert(e.tick);
            }
        }
        let mut total = 0u64;
        for e in t.events_of("client-done") {
            m.client_contacts_max = m.client_contacts_max.max(e.u64("contacts").unwrap_or(0));
            if e.get("outcome") != Ok("included") {
                continue;
            }
            let Some(start) = e.get("tx").ok().and_then(|tx| first_submit.get(tx)) else {
                continue;
            };
            let latency = e.tick.saturating_sub(*start);
            m.included += 1;
            total += latency;
            m.latency_max = m.latency_max.max(latency);
        }
        if m.included > 0 {
            m.latency_mean = total as f64 / m.included as f64;
        }
        for e in t.events_of("stf-done") {
            m.stf_contacts_max = m.stf_contacts_max.max(e.u64("contacts").unwrap_or(0));
        }
        m.wait_rounds_max = wait_rounds(t);
        m
    }
}

fn wait_rounds(t: &Transcript) -> u64 {
    let mut delivers: BTreeMap<&str, Vec<(u64, Vec<Digest>)>> = BTreeMap::new();
    for e in t.events_of("sbc-deliver") {
        if let Ok(set) = e.digests("set") {
            delivers.entry(e.actor.as_str()).or_default().push((e.tick, set));
        }
    }
    let mut worst = 0;
    for e in t.events_of("sbc-add") {
        let (Some(list), Ok(d)) = (delivers.get(e.actor.as_str()), e.digest("tx")) else {
            continue;
        };
        let mut waited = 0;
        for (_, set) in list.iter().filter(|(tick, _)| *tick >= e.tick) {
            waited += 1;
            if set.contains(&d) {
                worst = worst.max(waited);
                break;
            }
        }
    }
    worst
}
