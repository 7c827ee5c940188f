//! Seeded random number generation.
//!
//! Everything stochastic in the simulator draws from a [`Stream`]: a
//! SplitMix64 sequence initialized from a 64-bit seed and a domain label.
//! Each subsystem (mobility, fading, tasks, exploration, ...) owns its own
//! stream, so adding draws to one subsystem never perturbs another and runs
//! are reproducible across thread layouts.

/// Domain labels for the per-subsystem substreams.
///
/// A `(seed, domain)` pair fully determines a stream's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Placement = 1,
    Mobility = 2,
    Fading = 3,
    Tasks = 4,
    Exploration = 5,
    WeightInit = 6,
    MbsLoad = 7,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically fold a salt (epoch index, sweep cell, ...) into a
/// seed, producing an independent derived seed.
pub fn fold_seed(seed: u64, salt: u64) -> u64 {
    mix(seed ^ mix(salt.wrapping_mul(GOLDEN) ^ 0x243F_6A88_85A3_08D3))
}

/// A SplitMix64 generator.
///
/// State advances by the golden-ratio increment and is finalized with the
/// standard SplitMix64 mixer, giving a full-period 64-bit counter-based
/// sequence. Substreams are derived by hashing the seed with a domain label
/// and an optional instance index, so `derive(seed, d, 0)` and
/// `derive(seed, d, 1)` are independent for all practical purposes.
#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    /// Stream for `(seed, domain)`, instance 0.
    pub fn new(seed: u64, domain: Domain) -> Self {
        Self::derive(seed, domain, 0)
    }

    /// Stream for `(seed, domain, instance)`; use the instance for
    /// per-epoch or per-cell substreams.
    pub fn derive(seed: u64, domain: Domain, instance: u64) -> Self {
        let state = mix(seed ^ (domain as u64).wrapping_mul(GOLDEN))
            ^ mix(instance.wrapping_mul(GOLDEN) ^ 0x6A09_E667_F3BC_C909);
        Stream { state: mix(state) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of mantissa.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift rejection-free mapping; bias is < 2^-53 for the
        // small ranges used here.
        (self.next_f64() * n as f64) as usize % n
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        mean + std_dev * radius * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential with unit mean.
    pub fn exponential_unit_mean(&mut self) -> f64 {
        -(1.0 - self.next_f64()).ln()
    }

    /// Poisson draw via Knuth's multiplication method; intended for small
    /// means (the simulator uses means below ~30).
    pub fn poisson(&mut self, mean: f64) -> u64 {
        debug_assert!(mean >= 0.0);
        let limit = (-mean).exp();
        let mut k = 0u64;
        let mut product = 1.0;
        loop {
            product *= self.next_f64();
            if product <= limit {
                return k;
            }
            k += 1;
        }
    }
}
