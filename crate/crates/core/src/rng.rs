//! Deterministic random streams.
//!
//! Every sampled rollout gets its own generator derived from
//! `(seed, mpc step, sample index)`, so a batch produces the same noise no
//! matter how many threads evaluate it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies the noise stream used by one sampler invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, step: u64) -> Self {
        Self { seed, step }
    }

    /// Generator for sample `index` of this invocation.
    pub fn sample_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed ^ mix(self.step)));
        rng.set_stream(index as u64);
        rng
    }
}
