//! Counter-based noise streams.
//!
//! Every random draw in the crate comes from a ChaCha8 keystream selected by
//! `(seed, index, role)`: the seed is the cipher key, and `(index, role)` is
//! packed into the 64-bit stream id. Within one stream, draws are consumed in
//! a fixed order (one block of `d` normals per step), so results depend only on
//! the seed and the logical position of the draw, never on thread scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for. Distinct roles for the same index never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    /// Initial draws of a trajectory (prior sample).
    Init = 0,
    /// Brownian increments of the predictor (Euler-Maruyama) step.
    Predictor = 1,
    /// Langevin corrector noise.
    Corrector = 2,
    /// Draws from a data/target distribution.
    Target = 3,
    /// Injected score noise.
    ScoreNoise = 4,
    /// Time draws of Monte-Carlo loss estimators.
    Time = 5,
    /// Projection vectors of sliced score matching.
    Projection = 6,
    /// Kernel noise in exact forward sampling.
    Kernel = 7,
    /// Dataset generators.
    Dataset = 8,
    /// Bootstrap resampling.
    Bootstrap = 9,
}

const INDEX_BITS: u32 = 56;

/// A reproducible random stream keyed by `(seed, index, role)`.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, index: u64, role: Role) -> Self {
        debug_assert!(index < (1u64 << INDEX_BITS));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((index & ((1u64 << INDEX_BITS) - 1)) | ((role as u64) << INDEX_BITS));
        Self { rng }
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Draws an index from a discrete distribution given by its cumulative weights.
    pub fn categorical(&mut self, cumulative: &[f64]) -> usize {
        let total = *cumulative.last().expect("non-empty distribution");
        let u = self.uniform() * total;
        cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Derives a child seed from a parent seed and a label, e.g. one seed per sweep cell.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    NoiseStream::new(seed, label & ((1u64 << INDEX_BITS) - 1), Role::Dataset).next_u64()
}
