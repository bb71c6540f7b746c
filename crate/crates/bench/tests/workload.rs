use std::collections::HashSet;

use arranger_bench::workload::{directory, gen_workload, SizeDistribution};
use arranger_core::validate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn same_seed_same_workload() {
    let d = SizeDistribution::default();
    assert_eq!(gen_workload(200, 5, &d), gen_workload(200, 5, &d));
    assert_ne!(gen_workload(200, 5, &d), gen_workload(200, 6, &d));
}

#[test]
fn forty_thousand_distinct_valid_requests() {
    let txs = gen_workload(40_000, 1, &SizeDistribution::default());
    assert_eq!(txs.len(), 40_000);
    let digests: HashSet<_> = txs.iter().map(|t| t.digest()).collect();
    assert_eq!(digests.len(), 40_000);
    let dir = directory();
    assert!(txs.iter().step_by(97).all(|t| validate(t, &dir)));
}

#[test]
fn lengths_follow_the_configured_log_normal() {
    let d = SizeDistribution {
        mu: 5.0,
        sigma: 0.5,
        min: 1,
        max: 1 << 20,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let logs: Vec<f64> = (0..10_000).map(|_| (d.sample(&mut rng) as f64).ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
    assert!((mean - d.mu).abs() / d.mu < 0.05, "mean of logs {mean}");
    assert!((var.sqrt() - d.sigma).abs() / d.sigma < 0.05, "std of logs {}", var.sqrt());
}

#[test]
fn payload_lengths_match_samples() {
    let d = SizeDistribution::default();
    let txs = gen_workload(500, 9, &d);
    assert!(txs.iter().all(|t| (d.min..=d.max).contains(&t.payload.len())));
}
