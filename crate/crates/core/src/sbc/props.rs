//! Post-hoc checkers for the five SBC properties over a recorded trace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::crypto::Digest;
use crate::types::ReplicaId;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum SbcProperty {
    Termination,
    Agreement,
    Validity,
    CensorshipResistance,
    Integrity,
}

impl SbcProperty {
    pub const ALL: [SbcProperty; 5] = [
        SbcProperty::Termination,
        SbcProperty::Agreement,
        SbcProperty::Validity,
        SbcProperty::CensorshipResistance,
        SbcProperty::Integrity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SbcProperty::Termination => "sbc-termination",
            SbcProperty::Agreement => "sbc-agreement",
            SbcProperty::Validity => "sbc-validity",
            SbcProperty::CensorshipResistance => "sbc-censorship-resistance",
            SbcProperty::Integrity => "sbc-integrity",
        }
    }
}

impl fmt::Display for SbcProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SbcProperty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SbcProperty::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown SBC property {s:?}"))
    }
}

/// Everything the checkers need, in digest form.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SbcTrace {
    pub honest: BTreeSet<ReplicaId>,
    /// Elements passed to `add` at each replica.
    pub added: BTreeMap<ReplicaId, BTreeSet<Digest>>,
    /// Proposals broadcast per round, by any replica or by the oracle.
    pub proposed: BTreeMap<u64, BTreeSet<Digest>>,
    /// Decided sets per replica, in delivery order.
    pub decided: BTreeMap<ReplicaId, Vec<(u64, Vec<Digest>)>>,
    /// Digests known not to carry a valid client signature.
    pub invalid: BTreeSet<Digest>,
    /// Honest replicas still holding undecided work when the run ended.
    pub stalled: BTreeSet<ReplicaId>,
}

impl SbcTrace {
    fn honest_decided(&self) -> impl Iterator<Item = (&ReplicaId, &Vec<(u64, Vec<Digest>)>)> {
        self.decided.iter().filter(|(r, _)| self.honest.contains(r))
    }
}

pub fn check(trace: &SbcTrace, prop: SbcProperty) -> Result<(), String> {
    match prop {
        SbcProperty::Termination => termination(trace),
        SbcProperty::Agreement => agreement(trace),
        SbcProperty::Validity => validity(trace),
        SbcProperty::CensorshipResistance => censorship(trace),
        SbcProperty::Integrity => integrity(trace),
    }
}

pub fn failing(trace: &SbcTrace) -> BTreeSet<SbcProperty> {
    SbcProperty::ALL
        .into_iter()
        .filter(|p| check(trace, *p).is_err())
        .collect()
}

fn termination(t: &SbcTrace) -> Result<(), String> {
    if let Some(r) = t.stalled.iter().next() {
        return Err(format!("{r} still had undecided work at the end of the run"));
    }
    let rounds: BTreeMap<&ReplicaId, usize> = t
        .honest
        .iter()
        .map(|r| (r, t.decided.get(r).map_or(0, Vec::len)))
        .collect();
    let max = rounds.values().copied().max().unwrap_or(0);
    match rounds.iter().find(|(_, c)| **c < max) {
        Some((r, c)) => Err(format!("{r} decided {c} rounds, others decided {max}")),
        None => Ok(()),
    }
}

fn agreement(t: &SbcTrace) -> Result<(), String> {
    let mut first: BTreeMap<u64, (&ReplicaId, &Vec<Digest>)> = BTreeMap::new();
    for (r, rounds) in t.honest_decided() {
        for (round, set) in rounds {
            match first.get(round) {
                None => {
                    first.insert(*round, (r, set));
                }
                Some((other, s)) if *s != set => {
                    return Err(format!("round {round}: {other} and {r} decided different sets"));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn validity(t: &SbcTrace) -> Result<(), String> {
    for (r, rounds) in t.honest_decided() {
        for (round, set) in rounds {
            if set.is_empty() {
                return Err(format!("{r} decided an empty set in round {round}"));
            }
            let union = t.proposed.get(round);
            for d in set {
                if t.invalid.contains(d) {
                    return Err(format!("{r} decided invalid element {d} in round {round}"));
                }
                if !union.is_some_and(|u| u.contains(d)) {
                    return Err(format!("{r} decided unproposed element {d} in round {round}"));
                }
            }
        }
    }
    Ok(())
}

fn censorship(t: &SbcTrace) -> Result<(), String> {
    let mut everywhere: Option<BTreeSet<Digest>> = None;
    for r in &t.honest {
        let added = t.added.get(r).cloned().unwrap_or_default();
        everywhere = Some(match everywhere {
            None => added,
            Some(acc) => acc.intersection(&added).copied().collect(),
        });
    }
    let everywhere: BTreeSet<Digest> = everywhere
        .unwrap_or_default()
        .difference(&t.invalid)
        .copied()
        .collect();
    for r in &t.honest {
        let got: BTreeSet<Digest> = t
            .decided
            .get(r)
            .into_iter()
            .flatten()
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        if let Some(d) = everywhere.iter().find(|d| !got.contains(d)) {
            return Err(format!("{d} was added at every honest replica but never decided at {r}"));
        }
    }
    Ok(())
}

fn integrity(t: &SbcTrace) -> Result<(), String> {
    for (r, rounds) in t.honest_decided() {
        let mut seen = BTreeSet::new();
        for (round, set) in rounds {
            for d in set {
                if !seen.insert(*d) {
                    return Err(format!("{r} decided {d} twice (again in round {round})"));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::sha256;

    fn d(i: u8) -> Digest {
        sha256(&[&[i]])
    }

    fn good() -> SbcTrace {
        let honest: BTreeSet<_> = (0..3).map(ReplicaId).collect();
        let mut t = SbcTrace {
            honest: honest.clone(),
            ..Default::default()
        };
        t.proposed.insert(0, [d(1), d(2)].into());
        t.proposed.insert(1, [d(3)].into());
        for r in honest {
            t.added.insert(r, [d(1), d(3)].into());
            t.decided
                .insert(r, vec![(0, vec![d(1), d(2)]), (1, vec![d(3)])]);
        }
        t
    }

    #[test]
    fn good_trace_passes_everything() {
        assert!(failing(&good()).is_empty());
    }

    #[test]
    fn each_mutation_trips_its_checker() {
        let mut t = good();
        t.proposed.get_mut(&1).unwrap().insert(d(1));
        t.decided.get_mut(&ReplicaId(1)).unwrap()[1].1.push(d(1));
        assert_eq!(failing(&t), [SbcProperty::Agreement, SbcProperty::Integrity].into());

        let mut t = good();
        t.invalid.insert(d(2));
        assert_eq!(failing(&t), [SbcProperty::Validity].into());

        let mut t = good();
        for r in 0..3 {
            t.added.get_mut(&ReplicaId(r)).unwrap().insert(d(9));
        }
        assert_eq!(failing(&t), [SbcProperty::CensorshipResistance].into());

        let mut t = good();
        t.decided.get_mut(&ReplicaId(2)).unwrap().pop();
        assert!(failing(&t).contains(&SbcProperty::Termination));

        let mut t = good();
        t.stalled.insert(ReplicaId(0));
        assert_eq!(failing(&t), [SbcProperty::Termination].into());
    }

    #[test]
    fn names_roundtrip() {
        for p in SbcProperty::ALL {
            assert_eq!(p.name().parse::<SbcProperty>().unwrap(), p);
        }
    }
}
