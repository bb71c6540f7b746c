//! Synthetic transaction requests.
//!
//! Payloads imitate contract calldata: a selector drawn from a small pool
//! followed by 32-byte words that are either padded addresses from a pool,
//! small amounts or random data. Payload lengths follow a log-normal law.

use arranger_core::crypto::sha256;
use arranger_core::{ClientDirectory, ClientId, ClientKey, TransactionRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::BenchError;

/// Log-normal payload length in bytes, clamped to `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeDistribution {
    /// Mean of the natural log of the length.
    pub mu: f64,
    /// Standard deviation of the natural log of the length.
    pub sigma: f64,
    pub min: usize,
    pub max: usize,
}

impl Default for SizeDistribution {
    fn default() -> Self {
        SizeDistribution {
            mu: 5.5,
            sigma: 0.6,
            min: 4,
            max: 64 * 1024,
        }
    }
}

impl SizeDistribution {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0 && self.mu.is_finite()) {
            return Err(BenchError::Config("log-normal parameters must be finite".into()));
        }
        if self.min == 0 || self.min > self.max {
            return Err(BenchError::Config("payload bounds must satisfy 0 < min <= max".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let d = LogNormal::new(self.mu, self.sigma).expect("validated parameters");
        (d.sample(rng).round() as usize).clamp(self.min, self.max)
    }
}

pub const CLIENTS: u64 = 64;
const SELECTORS: usize = 16;
const ADDRESSES: usize = 256;

pub fn client_key(id: u64) -> ClientKey {
    let seed = sha256(&[b"bench-client", &id.to_be_bytes()]);
    ClientKey::from_seed(ClientId(id), seed.0)
}

pub fn directory() -> ClientDirectory {
    (0..CLIENTS)
        .map(|c| (ClientId(c), client_key(c).verifying_key()))
        .collect()
}

/// `n_txs` signed requests, deterministic in `seed`. Nonces are the request
/// index, so all requests are distinct.
pub fn gen_workload(n_txs: usize, seed: u64, sizes: &SizeDistribution) -> Vec<TransactionRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<ClientKey> = (0..CLIENTS).map(client_key).collect();
    let selectors: Vec<[u8; 4]> = (0..SELECTORS).map(|_| rng.gen()).collect();
    let addresses: Vec<[u8; 20]> = (0..ADDRESSES).map(|_| rng.gen()).collect();
    (0..n_txs)
        .map(|i| {
            let len = sizes.sample(&mut rng);
            let payload = calldata(&mut rng, len, &selectors, &addresses);
            let key = &keys[rng.gen_range(0..keys.len())];
            key.sign_request(i as u64, payload)
        })
        .collect()
}

fn calldata(rng: &mut impl Rng, len: usize, selectors: &[[u8; 4]], addresses: &[[u8; 20]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    out.extend_from_slice(&selectors[rng.gen_range(0..selectors.len())]);
    while out.len() < len {
        let mut word = [0u8; 32];
        match rng.gen_range(0..4) {
            0 | 1 => word[12..].copy_from_slice(&addresses[rng.gen_range(0..addresses.len())]),
            2 => word[24..].copy_from_slice(&rng.gen_range(0u64..1 << 40).to_be_bytes()),
            _ => rng.fill(&mut word[..]),
        }
        out.extend_from_slice(&word);
    }
    out.truncate(len);
    out
}
