//! Seeded random sampling.
//!
//! All stochastic choices in the crate (policy initialization, relaxed
//! mapping initialization) go through [`SeededRng`], so a 64-bit seed pins
//! every run bit-for-bit across platforms and worker counts.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call; no spare
    /// is cached so the stream position is a simple function of call count.
    pub fn next_gaussian(&mut self) -> f64 {
        // Guard the log: u1 in (0, 1].
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64], std: f64) {
        for v in out {
            *v = std * self.next_gaussian();
        }
    }
}
