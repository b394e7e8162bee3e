//! Domain types shared by the simulator, the scheduler and the analysis code.
//!
//! A queue holds jobs of up to [`MAX_PRIORITIES`] levels; level 0 is the
//! highest priority and is always served first. All randomness flows through
//! [`RngStream`], which is derived from a `(seed, stream)` pair so that
//! replicate runs are independent yet reproducible.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::StrategyKind;

/// Number of priority levels a queue can hold.
pub const MAX_PRIORITIES: usize = 3;

/// Job priority. Level 0 is served before level 1, level 1 before level 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Priority(u8);

impl Priority {
    pub const HIGHEST: Priority = Priority(0);

    pub fn new(level: usize) -> Result<Self> {
        if level < MAX_PRIORITIES {
            Ok(Priority(level as u8))
        } else {
            Err(Error::contract(format!(
                "priority level {level} out of range 0..{MAX_PRIORITIES}"
            )))
        }
    }

    #[inline]
    pub fn level(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for Priority {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Priority::new(v as usize)
    }
}

impl From<Priority> for u8 {
    fn from(p: Priority) -> u8 {
        p.0
    }
}

/// Per-priority job counts of one queue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueState {
    pub counts: [u32; MAX_PRIORITIES],
}

impl QueueState {
    pub fn from_counts(counts: [u32; MAX_PRIORITIES]) -> Self {
        QueueState { counts }
    }

    #[inline]
    pub fn count(&self, p: Priority) -> u32 {
        self.counts[p.level()]
    }

    #[inline]
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    #[inline]
    pub fn cumulative(&self, p: Priority) -> u32 {
        self.counts[..=p.level()].iter().sum()
    }

    #[inline]
    pub fn push(&mut self, p: Priority) {
        self.counts[p.level()] += 1;
    }

    /// Removes one job of the highest nonempty priority level and returns its
    /// level, or `None` if the queue is empty.
    #[inline]
    pub fn pop_highest(&mut self) -> Option<Priority> {
        let level = self.counts.iter().position(|&c| c > 0)?;
        self.counts[level] -= 1;
        Some(Priority(level as u8))
    }
}

pub fn total_depth(q: &QueueState) -> u32 {
    q.total()
}

pub fn cumulative_depth(q: &QueueState, p: Priority) -> u32 {
    q.cumulative(p)
}

/// Full description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub lambda: f64,
    pub mu: f64,
    pub total_jumps: u64,
    pub d: usize,
    pub burst_count: usize,
    pub burst_factor: f64,
    pub burst_length_fraction: f64,
    pub warmup_fraction: f64,
    pub priority_mix: Vec<f64>,
    pub strategy: StrategyKind,
    pub lag: u64,
    pub snapshot_interval: u64,
    pub fuzz: u32,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 1000,
            lambda: 0.95,
            mu: 1.0,
            total_jumps: 12_000_000,
            d: 2,
            burst_count: 0,
            burst_factor: 1.2,
            burst_length_fraction: 0.02,
            warmup_fraction: 0.60,
            priority_mix: vec![1.0],
            strategy: StrategyKind::Independent,
            lag: 0,
            snapshot_interval: 2000,
            fuzz: 0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Priority mix with three equiprobable levels.
    pub fn uniform_three_priorities() -> Vec<f64> {
        vec![1.0 / 3.0; 3]
    }

    pub fn levels(&self) -> usize {
        self.priority_mix.len()
    }

    /// Per-level arrival rates `lambda * mix[k]`.
    pub fn priority_rates(&self) -> Vec<f64> {
        self.priority_mix.iter().map(|w| w * self.lambda).collect()
    }

    pub fn burst_rate(&self) -> f64 {
        self.lambda * self.burst_factor
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "need at least one queue"));
        }
        if !(self.lambda >= 0.0 && self.lambda < 1.0) {
            return Err(Error::config("lambda", format!("{} not in [0, 1)", self.lambda)));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::config("mu", format!("{} not in (0, 1]", self.mu)));
        }
        if self.lambda >= self.mu {
            return Err(Error::config(
                "lambda",
                format!("lambda {} must be below mu {}", self.lambda, self.mu),
            ));
        }
        if self.total_jumps == 0 {
            return Err(Error::config("total_jumps", "must be positive"));
        }
        if self.d == 0 {
            return Err(Error::config("d", "need at least one probe"));
        }
        if !(self.burst_factor.is_finite() && self.burst_factor > 0.0) {
            return Err(Error::config("burst_factor", "must be positive"));
        }
        if !(self.burst_length_fraction >= 0.0 && self.burst_length_fraction < 1.0) {
            return Err(Error::config("burst_length_fraction", "must be in [0, 1)"));
        }
        if !(self.warmup_fraction >= 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::config("warmup_fraction", "must be in [0, 1)"));
        }
        if self.priority_mix.is_empty() || self.priority_mix.len() > MAX_PRIORITIES {
            return Err(Error::config(
                "priority_mix",
                format!("need 1..={MAX_PRIORITIES} levels, got {}", self.priority_mix.len()),
            ));
        }
        if self.priority_mix.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("priority_mix", "weights must be non-negative"));
        }
        let sum: f64 = self.priority_mix.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("priority_mix", format!("weights sum to {sum}, not 1")));
        }
        if self.snapshot_interval == 0 {
            return Err(Error::config("snapshot_interval", "must be positive"));
        }
        if self.lag % self.snapshot_interval != 0 {
            return Err(Error::config(
                "lag",
                format!(
                    "{} is not a multiple of snapshot_interval {}",
                    self.lag, self.snapshot_interval
                ),
            ));
        }
        Ok(())
    }
}

/// Deterministic random stream. Each `(seed, stream)` pair yields an
/// independent ChaCha8 sequence.
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream(rng)
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        if n <= u32::MAX as usize {
            self.0.gen_range(0..n as u32) as usize
        } else {
            self.0.gen_range(0..n)
        }
    }

    /// Uniform real in `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    #[inline]
    pub fn coin(&mut self) -> bool {
        self.0.gen::<bool>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// Exact Poisson sampler by sequential inversion of the CDF.
///
/// `exp(-rate)` is cached so repeated draws at the same rate cost one uniform
/// plus `k` multiplications.
#[derive(Debug, Clone, Copy)]
pub struct PoissonSampler {
    rate: f64,
    p0: f64,
}

impl PoissonSampler {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::contract(format!("poisson rate {rate} must be >= 0")));
        }
        if rate > 700.0 {
            // exp(-rate) underflows past here
            return Err(Error::contract(format!("poisson rate {rate} too large")));
        }
        Ok(PoissonSampler {
            rate,
            p0: (-rate).exp(),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> u32 {
        if self.rate == 0.0 {
            return 0;
        }
        let u = rng.unit();
        let mut k = 0u32;
        let mut p = self.p0;
        let mut cdf = p;
        while u >= cdf {
            k += 1;
            p *= self.rate / k as f64;
            let next = cdf + p;
            if next == cdf {
                // remaining mass is below f64 resolution
                break;
            }
            cdf = next;
        }
        k
    }
}

pub fn poisson_sample(rate: f64, rng: &mut RngStream) -> Result<u32> {
    Ok(PoissonSampler::new(rate)?.sample(rng))
}
