//! Deterministic random streams with splittable per-run substreams.
//!
//! Substream `i` of `base_seed` is seeded from `base_seed ^ i`, so an
//! ensemble's draws are fixed by (seed, run index) alone — independent of
//! thread count and scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// Independent substream for run `index` under `base_seed`.
    pub fn substream(base_seed: u64, index: u64) -> Self {
        RandomStream::new(base_seed ^ index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// One N(0, variance) draw.
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }
}
