use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::Scheme;
use crate::error::ConfigError;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Centralized sequencer with a decentralized DAC.
    Semi,
    /// Every replica sequences through set consensus.
    Full,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Semi => "semi",
            Mode::Full => "full",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semi" => Ok(Mode::Semi),
            "full" => Ok(Mode::Full),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// When the sequencer cuts a batch: at `max_pending` requests, or after
/// `timeout_ticks` since the last post with anything pending.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchPolicy {
    pub max_pending: usize,
    pub timeout_ticks: u64,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy {
            max_pending: 16,
            timeout_ticks: 20,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SystemConfig {
    pub n: usize,
    pub f: usize,
    pub mode: Mode,
    /// Semi mode only: accept `f >= n/2`. Safety still holds but
    /// Termination does not.
    pub honest_minority: bool,
    pub batch: BatchPolicy,
    /// Full mode: length in ticks of each replica's posting slice.
    pub turn_slice: u64,
    pub scheme: Scheme,
}

impl SystemConfig {
    pub fn full(n: usize, f: usize) -> Self {
        SystemConfig {
            n,
            f,
            mode: Mode::Full,
            honest_minority: false,
            batch: BatchPolicy::default(),
            turn_slice: 10,
            scheme: Scheme::Ed25519,
        }
    }

    pub fn semi(n: usize, f: usize) -> Self {
        SystemConfig {
            mode: Mode::Semi,
            ..SystemConfig::full(n, f)
        }
    }

    /// Signatures needed for a certified tag.
    pub fn certify_quorum(&self) -> usize {
        self.f + 1
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::NoReplicas);
        }
        if self.f >= self.n {
            return Err(ConfigError::TooManyFaults {
                n: self.n,
                f: self.f,
            });
        }
        if self.turn_slice == 0 {
            return Err(ConfigError::NotPositive("turn_slice"));
        }
        if self.batch.max_pending == 0 {
            return Err(ConfigError::NotPositive("max_pending"));
        }
        if self.batch.timeout_ticks == 0 {
            return Err(ConfigError::NotPositive("timeout_ticks"));
        }
        match self.mode {
            Mode::Full if 3 * self.f >= self.n => Err(ConfigError::FullResilience {
                n: self.n,
                f: self.f,
            }),
            Mode::Semi if 2 * self.f >= self.n && !self.honest_minority => {
                Err(ConfigError::SemiResilience {
                    n: self.n,
                    f: self.f,
                })
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resilience_bounds() {
        assert!(SystemConfig::full(4, 1).validate().is_ok());
        assert!(SystemConfig::full(3, 1).validate().is_err());
        assert!(SystemConfig::full(10, 3).validate().is_ok());
        assert!(SystemConfig::semi(5, 2).validate().is_ok());
        assert!(SystemConfig::semi(4, 2).validate().is_err());
        let mut minority = SystemConfig::semi(5, 3);
        assert!(minority.validate().is_err());
        minority.honest_minority = true;
        assert!(minority.validate().is_ok());
        assert!(SystemConfig::semi(3, 3).validate().is_err());
        assert_eq!(SystemConfig::full(7, 2).certify_quorum(), 3);
    }
}
