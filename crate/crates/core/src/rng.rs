//! Counter-based, splittable random streams.
//!
//! Every trial draws from its own ChaCha8 stream keyed by `(seed, stream)`, so
//! a batch can be evaluated in any order (or in parallel) and still reproduce
//! the same values.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// A uniform stream identified by `(seed, stream)`.
#[derive(Clone, Debug)]
pub struct TrialRng {
    inner: ChaCha8Rng,
}

impl TrialRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Stream for trial `trial` of run `run` when each run contains `trials_per_run` trials.
    pub fn for_trial(seed: u64, run: usize, trials_per_run: usize, trial: usize) -> Self {
        Self::new(seed, (run as u64) * (trials_per_run as u64) + trial as u64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (n > 0).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let x = (self.uniform() * n as f64) as usize;
        x.min(n - 1)
    }

    /// Inverse-CDF draw from `probs`, scanning indices in ascending order.
    ///
    /// Any round-off deficit in the cumulative sum falls on the last index with
    /// positive probability.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_positive = i;
                if u < acc {
                    return i;
                }
            }
        }
        last_positive
    }
}
