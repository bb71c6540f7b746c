use std::time::{Duration, Instant};

/// Sample mean and standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(samples: &[f64]) -> Stat {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return Stat { mean: 0.0, std: 0.0 };
        }
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Stat { mean, std: var.sqrt() }
    }

    /// Standard deviation relative to the mean.
    pub fn spread(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.std / self.mean
        }
    }
}

/// Runs `op` back to back for `duration` and returns units per second.
/// `op` reports how many units (transactions, signatures) it processed.
pub fn rate(duration: Duration, mut op: impl FnMut(usize) -> u64) -> f64 {
    let start = Instant::now();
    let mut units = 0u64;
    let mut i = 0usize;
    loop {
        units += op(i);
        i += 1;
        let elapsed = start.elapsed();
        if elapsed >= duration {
            return units as f64 / elapsed.as_secs_f64();
        }
    }
}

/// `repetitions` independent rate measurements.
pub fn repeat(repetitions: usize, duration: Duration, mut op: impl FnMut(usize) -> u64) -> Stat {
    let samples: Vec<f64> = (0..repetitions).map(|_| rate(duration, &mut op)).collect();
    Stat::of(&samples)
}
