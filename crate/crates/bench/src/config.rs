use std::time::Duration;

use crate::error::BenchError;
use crate::workload::SizeDistribution;

/// Parameters shared by every experiment.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    /// Transactions per batch, one experiment point each.
    pub sizes: Vec<usize>,
    pub batches_per_size: usize,
    /// Wall-clock length of one throughput measurement.
    pub duration: Duration,
    pub repetitions: usize,
    /// Signer counts for the aggregation and aggregate verification sweeps.
    pub signer_counts: Vec<usize>,
    /// Worker thread counts for the verification sweep.
    pub worker_counts: Vec<usize>,
    /// Signers behind the certified tag measured by the size experiment.
    pub tag_signers: usize,
    pub seed: u64,
    pub payload: SizeDistribution,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: (1..=11).map(|k| 400 * k).collect(),
            batches_per_size: 10,
            duration: Duration::from_secs(1),
            repetitions: 10,
            signer_counts: vec![8, 16, 32, 64, 128, 256],
            worker_counts: vec![1, 2, 4, 8, 16],
            tag_signers: 3,
            seed: 1,
            payload: SizeDistribution::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let lists = [
            ("sizes", &self.sizes),
            ("signer_counts", &self.signer_counts),
            ("worker_counts", &self.worker_counts),
        ];
        for (name, list) in lists {
            if list.is_empty() || list.contains(&0) {
                return Err(BenchError::Config(format!("{name} must be non-empty and positive")));
            }
        }
        if self.batches_per_size == 0 || self.repetitions == 0 || self.tag_signers == 0 {
            return Err(BenchError::Config("counts must be positive".into()));
        }
        if self.duration.is_zero() {
            return Err(BenchError::Config("duration must be positive".into()));
        }
        self.payload.validate()
    }

    /// Transactions needed so no two batches share a request.
    pub fn workload_len(&self) -> usize {
        let max = self.sizes.iter().copied().max().unwrap_or(0);
        (max * self.batches_per_size).max(40_000)
    }
}
