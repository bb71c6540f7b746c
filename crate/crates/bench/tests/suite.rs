use std::time::Duration;

use arranger_bench::suite::{replica_key, signed_items, verify_parallel};
use arranger_bench::{run_suite, BenchConfig, Stat, Suite};
use arranger_core::crypto::{verify, Signature};

fn tiny() -> BenchConfig {
    BenchConfig {
        sizes: vec![40, 80],
        batches_per_size: 3,
        duration: Duration::from_millis(5),
        repetitions: 2,
        signer_counts: vec![2, 4],
        worker_counts: vec![1, 2],
        ..BenchConfig::default()
    }
}

#[test]
fn every_suite_produces_rows() {
    let report = run_suite(&tiny(), Suite::All).unwrap();
    for exp in [
        "size-compressed",
        "size-tag",
        "hash",
        "compress",
        "translate",
        "aggregate",
        "verify-aggregate",
    ] {
        assert_eq!(report.series(exp).len(), 2, "{exp}");
    }
    assert_eq!(report.series("sign").len(), 1);
    assert_eq!(report.series("verify").len(), 2);
    assert!(report.rows.iter().all(|r| r.mean > 0.0));
    let csv = report.to_csv();
    assert!(csv.starts_with("experiment,parameter,mean,std,unit\n"));
    assert_eq!(csv.lines().count(), report.rows.len() + 1);
    assert_eq!(report.plot_data().lines().count(), report.rows.len() + 1);
}

#[test]
fn tag_size_does_not_depend_on_batch_size() {
    let report = run_suite(&tiny(), Suite::Size).unwrap();
    let tags = report.series("size-tag");
    assert!(tags.iter().all(|r| r.std == 0.0 && r.mean == tags[0].mean));
}

#[test]
fn parallel_verification_matches_sequential() {
    let key = replica_key(0);
    let mut items = signed_items(&key, 12);
    items[5].1 = Signature(vec![0; 96]);
    items[9].1 = items[8].1.clone();
    let sequential: Vec<bool> = items.iter().map(|(t, s)| verify(t, s, key.public())).collect();
    assert_eq!(sequential.iter().filter(|ok| !**ok).count(), 2);
    for workers in [1, 2, 3, 5, 16] {
        assert_eq!(verify_parallel(&items, key.public(), workers), sequential);
    }
}

#[test]
fn invalid_configuration_is_rejected() {
    let mut c = tiny();
    c.worker_counts = vec![0];
    assert!(run_suite(&c, Suite::Ver).is_err());
    assert!("bogus".parse::<Suite>().is_err());
    assert_eq!("trans".parse::<Suite>().unwrap(), Suite::Trans);
}

#[test]
fn stat_uses_sample_deviation() {
    let s = Stat::of(&[1.0, 2.0, 3.0]);
    assert_eq!(s.mean, 2.0);
    assert_eq!(s.std, 1.0);
}
