//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion that the host can support fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use arranger_bench::{run_suite, BenchConfig, BenchReport, Suite};
use arranger_core::crypto::{aggregate, merkle_root, sign, verify_aggregate};
use arranger_core::simnet::scenario::{
    Behavior, Engine, FaultSpec, OracleSabotageKind, Protocol, Scenario, SequencerKind,
};
use arranger_core::simnet::sweep::{load_dir, run_one, sweep};
use arranger_core::simnet::{run, Property, SweepRow};
use arranger_core::{crypto::sha256, BatchTag, KeyPair, Pki, ReplicaId, Scheme};

const SEEDS: u64 = 100;
const BENCH_REPETITIONS: usize = 10;
const BENCH_DURATION: Duration = Duration::from_millis(50);
const TAG_RATIO_MIN: f64 = 100.0;
const VERIFY_SCALING_MIN: f64 = 4.0;
const VERIFY_WORKERS: u64 = 16;
const TRANSLATE_OVER_HASH_MIN: f64 = 10.0;
const DETERMINISM_SPOT_CHECKS: usize = 20;
const MERKLE_FOUR: &str = "33376a3bd63e9993708a84ddfe6c28ae58b83505dd1fed711bd924ec5a6239f0";
const MERKLE_THREE: &str = "e9636069c740c9ff51625b01a0b040396d265a9b920cc6febdfa5ecc9f58ecce";

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
    /// Set when the host cannot exhibit the behavior being measured.
    waived: Option<String>,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome {
        pass,
        detail,
        waived: None,
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn faults(s: &mut Scenario, b: Behavior, replicas: impl IntoIterator<Item = usize>) {
    for r in replicas {
        s.faults.push(FaultSpec {
            replica: r as u16,
            behavior: b,
            censor_client: (b == Behavior::Censor).then_some(0),
        });
    }
}

fn seeded(scenarios: &[Scenario]) -> Vec<SweepRow> {
    sweep(scenarios, SEEDS, workers()).expect("scenarios are valid")
}

fn names(ps: &BTreeSet<Property>) -> String {
    let v: Vec<&str> = ps.iter().map(|p| p.name()).collect();
    if v.is_empty() {
        "none".into()
    } else {
        v.join(",")
    }
}

/// Rows whose failing set differs from `expected`, rendered for the report.
fn mismatches(rows: &[SweepRow], expected: &BTreeSet<Property>) -> Vec<String> {
    rows.iter()
        .filter(|r| &r.failing != expected)
        .map(|r| format!("{}@{} failed {{{}}}", r.scenario, r.seed, names(&r.failing)))
        .collect()
}

fn summary(runs: usize, bad: &[String]) -> String {
    match bad.first() {
        None => format!("{runs} runs"),
        Some(first) => format!("{runs} runs, {} unexpected, first {first}", bad.len()),
    }
}

fn set(ps: &[Property]) -> BTreeSet<Property> {
    ps.iter().copied().collect()
}

fn full_matrix() -> Vec<Scenario> {
    let mut v = Vec::new();
    for n in [4usize, 7, 10] {
        let f = (n - 1) / 3;
        v.push(Scenario::new(&format!("full-n{n}-honest"), Protocol::Full, n, f));
        for b in Behavior::ALL {
            let mut s = Scenario::new(&format!("full-n{n}-{}", b.name()), Protocol::Full, n, f);
            faults(&mut s, b, (n - f)..n);
            v.push(s);
        }
    }
    v
}

fn full_mode() -> Outcome {
    let rows = seeded(&full_matrix());
    let mut bad = mismatches(&rows, &BTreeSet::new());
    bad.extend(
        rows.iter()
            .filter(|r| !r.quiescent)
            .map(|r| format!("{}@{} hit the tick budget", r.scenario, r.seed)),
    );
    outcome(bad.is_empty(), summary(rows.len(), &bad))
}

fn semi_mode() -> Outcome {
    let mut honest = Vec::new();
    for (n, f) in [(3usize, 1usize), (5, 2), (7, 3)] {
        honest.push(Scenario::new(&format!("semi-n{n}-honest"), Protocol::Semi, n, f));
        for b in [Behavior::Silent, Behavior::WrongTranslate] {
            let mut s = Scenario::new(&format!("semi-n{n}-{}", b.name()), Protocol::Semi, n, f);
            faults(&mut s, b, 0..f);
            honest.push(s);
        }
    }
    let mut minority = Scenario::new("semi-n5-honest-minority", Protocol::Semi, 5, 3);
    minority.honest_minority = true;
    minority.schedule.max_ticks = 1500;
    faults(&mut minority, Behavior::Silent, 0..3);
    let sequencers: Vec<Scenario> = [
        SequencerKind::Withhold,
        SequencerKind::WrongHash,
        SequencerKind::Censor,
        SequencerKind::ReuseId,
    ]
    .into_iter()
    .map(|k| {
        let mut s = Scenario::new(&format!("semi-sequencer-{k:?}"), Protocol::Semi, 3, 1);
        s.sequencer.behavior = k;
        s.sequencer.censor_client = Some(0);
        s.schedule.max_ticks = 1500;
        s
    })
    .collect();

    let termination = set(&[Property::Termination]);
    let rows_h = seeded(&honest);
    let rows_m = seeded(&[minority]);
    let rows_s = seeded(&sequencers);
    let mut bad = mismatches(&rows_h, &BTreeSet::new());
    bad.extend(mismatches(&rows_m, &termination));
    bad.extend(mismatches(&rows_s, &termination));
    let runs = rows_h.len() + rows_m.len() + rows_s.len();
    outcome(bad.is_empty(), summary(runs, &bad))
}

fn sbc_scenarios() -> Vec<Scenario> {
    let mut v = Vec::new();
    for n in [4usize, 7] {
        let f = (n - 1) / 3;
        v.push(Scenario::new(&format!("sbc-n{n}"), Protocol::Sbc, n, f));
        let mut s = Scenario::new(&format!("sbc-n{n}-spread"), Protocol::Sbc, n, f);
        s.workload.spread = 1;
        v.push(s);
        for b in [Behavior::Silent, Behavior::Equivocate, Behavior::Censor] {
            let mut s = Scenario::new(&format!("sbc-n{n}-{}", b.name()), Protocol::Sbc, n, f);
            faults(&mut s, b, (n - f)..n);
            v.push(s);
        }
    }
    v
}

fn sbc_suite() -> Outcome {
    let reference = sbc_scenarios();
    let rows_r = seeded(&reference);
    let mut bad = mismatches(&rows_r, &BTreeSet::new());

    let oracle: Vec<Scenario> = reference
        .iter()
        .map(|s| {
            let mut o = s.clone();
            o.engine = Engine::Oracle;
            o
        })
        .collect();
    let rows_o = seeded(&oracle);
    for (r, o) in rows_r.iter().zip(&rows_o) {
        if r.failing != o.failing {
            bad.push(format!(
                "{}@{} reference {{{}}} vs oracle {{{}}}",
                r.scenario,
                r.seed,
                names(&r.failing),
                names(&o.failing)
            ));
        }
    }

    let integrity = "sbc-integrity".parse::<Property>().expect("known property");
    let agreement = "sbc-agreement".parse::<Property>().expect("known property");
    let validity = "sbc-validity".parse::<Property>().expect("known property");
    let mut planted: Vec<(Scenario, BTreeSet<Property>)> = Vec::new();
    for (kind, p) in [
        (OracleSabotageKind::DuplicateDecision, integrity),
        (OracleSabotageKind::Disagree, agreement),
        (OracleSabotageKind::InvalidElement, validity),
    ] {
        let mut s = Scenario::new(&format!("sabotage-{kind:?}"), Protocol::Sbc, 4, 1);
        s.engine = Engine::Oracle;
        s.sabotage.oracle = kind;
        planted.push((s, set(&[p])));
    }
    let mut s = Scenario::new("sabotage-dedup-off", Protocol::Full, 4, 1);
    s.engine = Engine::Oracle;
    s.sabotage.oracle = OracleSabotageKind::DuplicateDecision;
    s.sabotage.dedup_off = true;
    planted.push((s, set(&[integrity, Property::Legality, Property::ExactlyOnce])));
    let mut s = Scenario::new("sabotage-conflict-post", Protocol::Full, 4, 1);
    s.sabotage.conflict_post = vec![2, 3];
    planted.push((s, set(&[Property::UniqueBatch])));
    let mut s = Scenario::new("sabotage-amnesia", Protocol::Full, 4, 1);
    s.sabotage.amnesia = true;
    planted.push((s, set(&[Property::Availability])));
    let mut planted_runs = 0;
    for (s, expected) in &planted {
        let rows = seeded(std::slice::from_ref(s));
        planted_runs += rows.len();
        bad.extend(mismatches(&rows, expected));
    }
    let runs = rows_r.len() + rows_o.len() + planted_runs;
    outcome(bad.is_empty(), summary(runs, &bad))
}

fn exactly_once() -> Outcome {
    let mut v = Vec::new();
    for (mode, n, f) in [(Protocol::Full, 4usize, 1usize), (Protocol::Full, 7, 2), (Protocol::Semi, 3, 1), (Protocol::Semi, 5, 2)] {
        for b in [None, Some(Behavior::Silent), Some(Behavior::Censor), Some(Behavior::Equivocate)] {
            if mode == Protocol::Semi && b.is_some_and(|b| b != Behavior::Silent) {
                continue;
            }
            let mut s = Scenario::new(&format!("{}-n{n}-{}", mode.name(), b.map_or("honest", Behavior::name)), mode, n, f);
            s.workload.duplicates = 4;
            s.workload.invalid = 2;
            if let Some(b) = b {
                faults(&mut s, b, (n - f)..n);
            }
            v.push(s);
        }
    }
    let rows = seeded(&v);
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.failing.contains(&Property::ExactlyOnce) || r.accepted == 0)
        .map(|r| format!("{}@{} failed {{{}}}", r.scenario, r.seed, names(&r.failing)))
        .collect();
    outcome(bad.is_empty(), summary(rows.len(), &bad))
}

fn bench_config() -> BenchConfig {
    BenchConfig {
        duration: BENCH_DURATION,
        repetitions: BENCH_REPETITIONS,
        ..BenchConfig::default()
    }
}

fn tag_size() -> Outcome {
    let report = run_suite(&bench_config(), Suite::Size).expect("size suite runs");
    let tags = report.series("size-tag");
    let sizes: BTreeSet<u64> = tags.iter().map(|r| r.mean as u64).collect();
    let max_std = tags.iter().map(|r| r.std).fold(0.0, f64::max);
    let tag = report.get("size-tag", 4400).expect("4400 measured").mean;
    let compressed = report.get("size-compressed", 4400).expect("4400 measured").mean;
    let ratio = compressed / tag;
    outcome(
        sizes.len() == 1 && max_std == 0.0 && ratio >= TAG_RATIO_MIN,
        format!("tag {tag:.0} B (std {max_std:.3}) across 400..4400, compressed/tag at 4400 = {ratio:.0}"),
    )
}

fn mean_of(report: &BenchReport, exp: &str) -> f64 {
    let s = report.series(exp);
    s.iter().map(|r| r.mean).sum::<f64>() / s.len() as f64
}

fn throughput() -> Outcome {
    let config = bench_config();
    let mut report = BenchReport::default();
    for suite in [Suite::Hash, Suite::Compress, Suite::Agg, Suite::Ver, Suite::Trans] {
        report.extend(run_suite(&config, suite).expect("bench suite runs"));
    }
    let hash_beats_compress = config.sizes.iter().all(|&s| {
        let h = report.get("hash", s as u64).expect("hash row").mean;
        let c = report.get("compress", s as u64).expect("compress row").mean;
        h > c
    });
    let agg: Vec<f64> = report.series("aggregate").iter().map(|r| r.mean).collect();
    let agg_decreasing = agg.windows(2).all(|w| w[1] < w[0]);
    let v1 = report.get("verify", 1).expect("1 worker").mean;
    let v16 = report.get("verify", VERIFY_WORKERS).expect("16 workers").mean;
    let scaling = v16 / v1;
    let trans_ratio = mean_of(&report, "translate") / mean_of(&report, "hash");

    let a = hash_beats_compress;
    let b = agg_decreasing;
    let c = scaling >= VERIFY_SCALING_MIN;
    let d = trans_ratio >= TRANSLATE_OVER_HASH_MIN;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    let detail = format!(
        "(a) hash>compress at every size: {}; (b) aggregate {:.0}..{:.0} ops/s decreasing: {}; \
         (c) verify x{scaling:.2} from 1 to {VERIFY_WORKERS} workers: {}; \
         (d) translate/hash = {trans_ratio:.1}: {}",
        mark(a),
        agg.first().copied().unwrap_or(0.0),
        agg.last().copied().unwrap_or(0.0),
        mark(b),
        mark(c),
        mark(d)
    );
    let cpus = workers();
    Outcome {
        pass: a && b && c && d,
        detail,
        waived: (a && b && d && !c && cpus < VERIFY_WORKERS as usize)
            .then(|| format!("verification scaling needs parallel hardware; host has {cpus} CPU(s)")),
    }
}

fn determinism() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let scenarios = load_dir(&dir).expect("scenario directory loads");
    let mut bad = Vec::new();
    let mut checked = 0;
    for (k, (_, s)) in scenarios.iter().cycle().take(DETERMINISM_SPOT_CHECKS).enumerate() {
        let s = s.clone().with_seed(1000 + k as u64);
        let a = run(&s).expect("scenario runs");
        let b = run(&s).expect("scenario runs");
        checked += 1;
        if a.transcript != b.transcript || a.logger_csv != b.logger_csv {
            bad.push(format!("{}@{}", s.name, s.seed));
        }
        if !run_one(&s, s.seed).is_ok_and(|r| r.ok()) {
            bad.push(format!("{}@{} outcome differs from its expectation", s.name, s.seed));
        }
    }
    outcome(
        bad.is_empty() && checked == DETERMINISM_SPOT_CHECKS,
        summary(checked, &bad).replace("runs", "scenarios re-run"),
    )
}

fn aggregate_subsets(scheme: Scheme, n: usize) -> Result<usize, String> {
    let keys: Vec<KeyPair> = (0..n)
        .map(|i| KeyPair::from_seed(scheme, sha256(&[b"acceptance", &[i as u8]]).0))
        .collect();
    let pki = Pki::from_keypairs(scheme, keys.iter().enumerate().map(|(i, k)| (ReplicaId(i as u16), k)))
        .map_err(|e| e.to_string())?;
    let tag = BatchTag::new(n as u64, sha256(&[b"subset tag"]));
    let other = BatchTag::new(n as u64, sha256(&[b"other tag"]));
    let sigs: Vec<_> = keys.iter().map(|k| sign(&tag, k)).collect();
    let mut checked = 0;
    for mask in 1u32..(1 << n) {
        let subset: BTreeMap<ReplicaId, _> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| (ReplicaId(i as u16), sigs[i].clone()))
            .collect();
        let agg = aggregate(&subset, scheme).map_err(|e| e.to_string())?;
        let fail = |what: &str| Err(format!("{scheme} n={n} subset {mask:#b}: {what}"));
        if !verify_aggregate(&tag, &agg, &pki) {
            return fail("valid aggregate rejected");
        }
        if verify_aggregate(&other, &agg, &pki) {
            return fail("aggregate accepted for another tag");
        }
        for byte in 0..agg.bytes.len() {
            let mut bad = agg.clone();
            bad.bytes[byte] ^= 0x01;
            if verify_aggregate(&tag, &bad, &pki) {
                return fail(&format!("flipped byte {byte} accepted"));
            }
            if scheme == Scheme::Bls && byte >= 8 {
                break;
            }
        }
        for i in 0..n {
            let mut bad = agg.clone();
            let id = ReplicaId(i as u16);
            if !bad.signers.remove(&id) {
                bad.signers.insert(id);
            }
            if !bad.signers.is_empty() && verify_aggregate(&tag, &bad, &pki) {
                return fail(&format!("signer set mutated at {id} accepted"));
            }
        }
        checked += 1;
    }
    Ok(checked)
}

fn crypto_oracles() -> Outcome {
    let four = merkle_root(&[b"a", b"b", b"c", b"d"]).map(|d| d.to_hex());
    let three = merkle_root(&[b"a", b"b", b"c"]).map(|d| d.to_hex());
    let merkle = four.as_deref() == Ok(MERKLE_FOUR) && three.as_deref() == Ok(MERKLE_THREE);
    let mut subsets = 0;
    let mut error = None;
    for scheme in [Scheme::Bls, Scheme::Ed25519] {
        for n in 1..=7 {
            match aggregate_subsets(scheme, n) {
                Ok(k) => subsets += k,
                Err(e) => {
                    error.get_or_insert(e);
                }
            }
        }
    }
    outcome(
        merkle && error.is_none(),
        format!(
            "merkle 4-leaf and 3-leaf roots {}; {subsets} signer subsets (n<=7, bls and ed25519){}",
            if merkle { "match" } else { "MISMATCH" },
            error.map(|e| format!(", {e}")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("full-mode-properties", full_mode),
        ("semi-mode-properties", semi_mode),
        ("sbc-properties", sbc_suite),
        ("exactly-once", exactly_once),
        ("tag-size", tag_size),
        ("throughput-shape", throughput),
        ("determinism", determinism),
        ("crypto-oracles", crypto_oracles),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, criterion) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = criterion();
        let secs = start.elapsed().as_secs_f64();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {} [{secs:.1}s]", o.detail);
        match (o.pass, o.waived) {
            (true, _) => {}
            (false, Some(why)) => println!("     not counted: {why}"),
            (false, None) => failed += 1,
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
