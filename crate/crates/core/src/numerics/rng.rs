use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Purposes that get their own non-overlapping random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Dataset shuffling and holdout splits.
    Data = 1,
    /// Weight initialisation.
    Init = 2,
    /// Epsilon-greedy exploration and replay sampling.
    Exploration = 3,
    /// Subject behaviour (synthetic agents).
    Subject = 4,
    /// Environment-side draws: random adversaries, learner-model sampling.
    Environment = 5,
}

const INDEX_BITS: u32 = 48;

/// Seeded generator: ChaCha8 keyed by the seed, with the 64-bit stream id
/// selecting a disjoint keystream per (purpose, index) pair. All derived
/// values (floats, ranges) are computed here from raw `u64` words so the
/// sequence does not depend on any external sampling algorithm.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Generator for a given purpose and index (e.g. episode number).
    pub fn stream(seed: u64, stream: Stream, index: u64) -> Self {
        assert!(index < 1 << INDEX_BITS, "stream index out of range");
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(((stream as u64) << INDEX_BITS) | index);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. Rejection sampling, no modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Draws an index from a probability vector.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding left the total just under 1; fall back to the last
        // index with non-zero mass.
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn sequence_is_pinned() {
        // Frozen first words for seed 7; changing the generator breaks replay.
        let mut r = Rng::new(7);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let mut again = Rng::new(7);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        assert_eq!(first, PINNED_SEED7.to_vec());
    }

    const PINNED_SEED7: [u64; 3] = [2910824217569608635, 3098856782162503994, 12991601491111613745];

    #[test]
    fn streams_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for s in [Stream::Data, Stream::Init, Stream::Exploration, Stream::Subject, Stream::Environment] {
            for idx in 0..4 {
                let mut r = Rng::stream(9, s, idx);
                let words: Vec<u64> = (0..4).map(|_| r.next_u64()).collect();
                assert!(seen.insert(words), "stream {s:?}/{idx} collided");
            }
        }
    }

    #[test]
    fn below_and_uniform_ranges() {
        let mut r = Rng::new(1);
        for _ in 0..10_000 {
            assert!(r.below(3) < 3);
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn categorical_respects_zero_mass() {
        let mut r = Rng::new(3);
        for _ in 0..1000 {
            assert_eq!(r.categorical(&[0.0, 1.0, 0.0]), 1);
        }
    }
}
