//! The benchmark experiments.
//!
//! Experiment names in the report, with their parameter and unit:
//! - `size-compressed`, `size-tag`: txs per batch, bytes;
//! - `hash`, `compress`, `translate`: txs per batch, tx/s;
//! - `sign`: 1, tags/s;
//! - `aggregate`, `verify-aggregate`: signers, ops/s;
//! - `verify`: worker threads, signatures/s.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use arranger_core::crypto::{
    aggregate, compress, hash_batch, sha256, sign, verify, verify_aggregate, CompressedBatch,
    PublicKey, Signature,
};
use arranger_core::{encode_batch, Batch, BatchTag, CertifiedBatchTag, Digest, KeyPair, Pki, ReplicaId, Scheme};

use crate::config::BenchConfig;
use crate::error::BenchError;
use crate::measure::{repeat, Stat};
use crate::report::BenchReport;
use crate::translate::{write_dictionary, Dictionary, TranslateClient, TranslateServer};
use crate::workload::gen_workload;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Suite {
    All,
    Size,
    Hash,
    Compress,
    Sign,
    Agg,
    Ver,
    Trans,
}

impl Suite {
    pub const EACH: [Suite; 7] = [
        Suite::Size,
        Suite::Hash,
        Suite::Compress,
        Suite::Sign,
        Suite::Agg,
        Suite::Ver,
        Suite::Trans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::All => "all",
            Suite::Size => "size",
            Suite::Hash => "hash",
            Suite::Compress => "compress",
            Suite::Sign => "sign",
            Suite::Agg => "agg",
            Suite::Ver => "ver",
            Suite::Trans => "trans",
        }
    }

    fn needs_batches(self) -> bool {
        matches!(self, Suite::All | Suite::Size | Suite::Hash | Suite::Compress | Suite::Trans)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        std::iter::once(Suite::All)
            .chain(Suite::EACH)
            .find(|x| x.name() == s)
            .ok_or_else(|| BenchError::UnknownSuite(s.to_string()))
    }
}

/// Batches of one size with everything derived from them.
pub struct SizeSet {
    pub size: usize,
    pub batches: Vec<Batch>,
    pub encoded: Vec<Vec<u8>>,
    pub hashes: Vec<Digest>,
    pub compressed: Vec<CompressedBatch>,
}

/// Inputs prepared before any timing starts.
pub struct Fixture {
    pub config: BenchConfig,
    pub sets: Vec<SizeSet>,
    pub keys: Vec<KeyPair>,
    pub pki: Pki,
}

pub fn replica_key(i: usize) -> KeyPair {
    let seed = sha256(&[b"bench-replica", &(i as u64).to_be_bytes()]);
    KeyPair::from_seed(Scheme::Bls, seed.0)
}

impl Fixture {
    pub fn build(config: &BenchConfig, with_batches: bool) -> Result<Self, BenchError> {
        config.validate()?;
        let mut sets = Vec::new();
        if with_batches {
            let txs = gen_workload(config.workload_len(), config.seed, &config.payload);
            let mut next_id = 0u64;
            for &size in &config.sizes {
                let mut set = SizeSet {
                    size,
                    batches: Vec::new(),
                    encoded: Vec::new(),
                    hashes: Vec::new(),
                    compressed: Vec::new(),
                };
                for chunk in txs.chunks_exact(size).take(config.batches_per_size) {
                    let b = Batch::new(next_id, chunk.to_vec());
                    next_id += 1;
                    let enc = encode_batch(&b);
                    set.hashes.push(hash_batch(&b)?);
                    set.compressed.push(CompressedBatch {
                        id: b.id,
                        bytes: compress(&enc),
                    });
                    set.encoded.push(enc);
                    set.batches.push(b);
                }
                sets.push(set);
            }
        }
        let max_signers = config
            .signer_counts
            .iter()
            .copied()
            .chain([config.tag_signers])
            .max()
            .unwrap_or(1);
        let keys: Vec<KeyPair> = (0..max_signers).map(replica_key).collect();
        let pki = Pki::from_keypairs(
            Scheme::Bls,
            keys.iter().enumerate().map(|(i, k)| (ReplicaId(i as u16), k)),
        )?;
        Ok(Fixture {
            config: config.clone(),
            sets,
            keys,
            pki,
        })
    }

    fn stat(&self, op: impl FnMut(usize) -> u64) -> Stat {
        repeat(self.config.repetitions, self.config.duration, op)
    }

    fn signatures(&self, tag: &BatchTag, count: usize) -> BTreeMap<ReplicaId, Signature> {
        (0..count)
            .map(|i| (ReplicaId(i as u16), sign(tag, &self.keys[i])))
            .collect()
    }

    /// Compressed-batch size and certified tag size per batch size.
    pub fn bench_size(&self) -> Result<BenchReport, BenchError> {
        let mut report = BenchReport::default();
        for set in &self.sets {
            let mut compressed = Vec::new();
            let mut tags = Vec::new();
            for (b, h) in set.batches.iter().zip(&set.hashes) {
                let tag = BatchTag::new(b.id, *h);
                let sigs = self.signatures(&tag, self.config.tag_signers);
                let cert = CertifiedBatchTag {
                    tag,
                    signature: aggregate(&sigs, Scheme::Bls)?,
                };
                tags.push(cert.encode().len() as f64);
            }
            for c in &set.compressed {
                compressed.push(c.encode().len() as f64);
            }
            let size = set.size as u64;
            report.push("size-compressed", size, Stat::of(&compressed), "bytes");
            report.push("size-tag", size, Stat::of(&tags), "bytes");
        }
        Ok(report)
    }

    pub fn bench_hash(&self) -> BenchReport {
        let mut report = BenchReport::default();
        for set in &self.sets {
            let k = set.batches.len();
            let stat = self.stat(|i| {
                let h = hash_batch(&set.batches[i % k]).expect("batches are non-empty");
                std::hint::black_box(h);
                set.size as u64
            });
            report.push("hash", set.size as u64, stat, "tx/s");
        }
        report
    }

    pub fn bench_compress(&self) -> BenchReport {
        let mut report = BenchReport::default();
        for set in &self.sets {
            let k = set.encoded.len();
            let stat = self.stat(|i| {
                std::hint::black_box(compress(&set.encoded[i % k]));
                set.size as u64
            });
            report.push("compress", set.size as u64, stat, "tx/s");
        }
        report
    }

    pub fn bench_sign(&self) -> BenchReport {
        let key = &self.keys[0];
        let stat = self.stat(|i| {
            let tag = BatchTag::new(i as u64, sha256(&[&(i as u64).to_be_bytes()]));
            std::hint::black_box(sign(&tag, key));
            1
        });
        let mut report = BenchReport::default();
        report.push("sign", 1, stat, "tags/s");
        report
    }

    /// Aggregation and aggregate verification per signer count.
    pub fn bench_agg(&self) -> Result<BenchReport, BenchError> {
        let mut report = BenchReport::default();
        let tag = BatchTag::new(7, sha256(&[b"aggregate"]));
        for &count in &self.config.signer_counts {
            let sigs = self.signatures(&tag, count);
            let agg = aggregate(&sigs, Scheme::Bls)?;
            let stat = self.stat(|_| {
                std::hint::black_box(aggregate(&sigs, Scheme::Bls).expect("valid signatures"));
                1
            });
            report.push("aggregate", count as u64, stat, "ops/s");
            let stat = self.stat(|_| {
                assert!(verify_aggregate(&tag, &agg, &self.pki));
                1
            });
            report.push("verify-aggregate", count as u64, stat, "ops/s");
        }
        Ok(report)
    }

    /// Individual signature verification with each worker count.
    pub fn bench_ver(&self) -> BenchReport {
        let items = signed_items(&self.keys[0], 64);
        let mut report = BenchReport::default();
        for &workers in &self.config.worker_counts {
            let samples: Vec<f64> = (0..self.config.repetitions)
                .map(|_| parallel_verify_rate(&items, self.keys[0].public(), workers, self.config.duration))
                .collect();
            report.push("verify", workers as u64, Stat::of(&samples), "sigs/s");
        }
        report
    }

    /// Sequential translation requests against a local server fed from
    /// dictionary files.
    pub fn bench_trans(&self) -> Result<BenchReport, BenchError> {
        let dir = tempfile::tempdir()?;
        let hashes = dir.path().join("hashes.txt");
        let blobs = dir.path().join("compressed.bin");
        write_dictionary(
            &hashes,
            &blobs,
            self.sets
                .iter()
                .flat_map(|s| s.hashes.iter().copied().zip(&s.compressed)),
        )?;
        let server = TranslateServer::spawn(Dictionary::load(&hashes, &blobs)?)?;
        let mut client = TranslateClient::connect(server.addr())?;
        let mut report = BenchReport::default();
        for set in &self.sets {
            let k = set.batches.len();
            let mut failure = None;
            let stat = self.stat(|i| {
                let b = &set.batches[i % k];
                match client.fetch(b.id, &set.hashes[i % k]) {
                    Ok(Some(_)) => set.size as u64,
                    Ok(None) => {
                        failure.get_or_insert(BenchError::MissingBatch(b.id));
                        0
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        0
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            report.push("translate", set.size as u64, stat, "tx/s");
        }
        Ok(report)
    }
}

/// `count` tags signed by `key`.
pub fn signed_items(key: &KeyPair, count: usize) -> Vec<(BatchTag, Signature)> {
    (0..count as u64)
        .map(|i| {
            let tag = BatchTag::new(i, sha256(&[b"verify", &i.to_be_bytes()]));
            let sig = sign(&tag, key);
            (tag, sig)
        })
        .collect()
}

/// Verifies every item, splitting the slice into `workers` disjoint parts.
/// The result equals sequential verification.
pub fn verify_parallel(items: &[(BatchTag, Signature)], pk: &PublicKey, workers: usize) -> Vec<bool> {
    let chunk = items.len().div_ceil(workers.max(1)).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|(t, sig)| verify(t, sig, pk)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("verification worker panicked"))
            .collect()
    })
}

/// Signatures verified per second by `workers` threads, each cycling over
/// its own disjoint slice until `duration` elapses.
fn parallel_verify_rate(items: &[(BatchTag, Signature)], pk: &PublicKey, workers: usize, duration: Duration) -> f64 {
    let chunk = items.len().div_ceil(workers).max(1);
    let start = Instant::now();
    let total: u64 = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let lo = (w * chunk) % items.len();
                let part = &items[lo..(lo + chunk).min(items.len())];
                s.spawn(move || {
                    let mut done = 0u64;
                    while start.elapsed() < duration {
                        let (t, sig) = &part[done as usize % part.len()];
                        assert!(verify(t, sig, pk));
                        done += 1;
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("verification worker panicked"))
            .sum()
    });
    total as f64 / start.elapsed().as_secs_f64()
}

/// Runs one suite, or every suite for [`Suite::All`].
pub fn run_suite(config: &BenchConfig, suite: Suite) -> Result<BenchReport, BenchError> {
    let fixture = Fixture::build(config, suite.needs_batches())?;
    let mut report = BenchReport::default();
    let parts: &[Suite] = if suite == Suite::All { &Suite::EACH } else { std::slice::from_ref(&suite) };
    for part in parts {
        match part {
            Suite::Size => report.extend(fixture.bench_size()?),
            Suite::Hash => report.extend(fixture.bench_hash()),
            Suite::Compress => report.extend(fixture.bench_compress()),
            Suite::Sign => report.extend(fixture.bench_sign()),
            Suite::Agg => report.extend(fixture.bench_agg()?),
            Suite::Ver => report.extend(fixture.bench_ver()),
            Suite::Trans => report.extend(fixture.bench_trans()?),
            Suite::All => unreachable!("expanded above"),
        }
    }
    Ok(report)
}
