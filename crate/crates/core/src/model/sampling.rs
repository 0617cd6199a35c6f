//! Seeded, reproducible token sampling.
//!
//! The generator is a counter-based SplitMix64: draw `n` (1-based) of a stream
//! with seed `s` is `mix64(s + n * 0x9E3779B97F4A7C15)` where `mix64` is the
//! SplitMix64 finalizer
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z =  z ^ (z >> 31)
//! ```
//!
//! (all arithmetic wrapping mod 2^64). Uniforms in `[0, 1)` take the top 53
//! bits: `(x >> 11) * 2^-53`. Tokens are drawn by inverse CDF: the first index
//! whose running cumulative probability exceeds the uniform.

use serde::{Deserialize, Serialize};

use super::dist::ProbDist;
use super::vocab::TokenId;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    seed: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Independent stream derived from this generator's seed and `stream`.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::new(mix64(self.seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))))
    }

    pub fn draws(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(
            self.seed
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (one value per two uniforms).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n.saturating_sub(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            seed: 0,
        }
    }

    pub fn new(temperature: f64, seed: u64) -> Self {
        Self { temperature, seed }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn rng(&self) -> Rng {
        Rng::new(self.seed)
    }
}

/// Inverse-CDF lookup for a fixed uniform `u` in `[0, 1)`.
pub fn sample_with_uniform(dist: &ProbDist, u: f64) -> TokenId {
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return TokenId::from(i);
        }
    }
    // rounding left the cumulative sum just below u
    TokenId::from(last_nonzero)
}

/// Draws a token and its confidence. Greedy mode takes the argmax without
/// consuming randomness, and the confidence is the maximum probability; in
/// sampling mode the confidence is the drawn token's probability.
pub fn sample_token(dist: &ProbDist, sampler: &SamplerConfig, rng: &mut Rng) -> (TokenId, f64) {
    let token = if sampler.is_greedy() {
        dist.argmax()
    } else {
        sample_with_uniform(dist, rng.next_f64())
    };
    (token, dist.prob(token))
}
