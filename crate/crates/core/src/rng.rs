//! Seedable random streams.
//!
//! Every oscillator, particle or signal path draws from its own ChaCha8
//! stream identified by `(seed, stream id)`. Paths therefore do not depend on
//! the population size or on the order in which oscillators are updated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream-id namespaces. Each family reserves 2³² consecutive ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFamily {
    /// Wiener increments of population oscillators and filter particles.
    Noise,
    /// Natural frequencies.
    Frequency,
    /// Initial phases.
    InitialPhase,
    /// Wiener increments of a hidden signal.
    Signal,
    /// Observation noise.
    Observation,
    /// Anything else a driver needs (random test inputs, initial parameters).
    Auxiliary,
}

impl StreamFamily {
    fn base(self) -> u64 {
        let slot: u64 = match self {
            StreamFamily::Noise => 0,
            StreamFamily::Frequency => 1,
            StreamFamily::InitialPhase => 2,
            StreamFamily::Signal => 3,
            StreamFamily::Observation => 4,
            StreamFamily::Auxiliary => 5,
        };
        slot << 32
    }

    pub fn id(self, index: u64) -> u64 {
        debug_assert!(index < (1 << 32));
        self.base() + index
    }
}

#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn of(seed: u64, family: StreamFamily, index: u64) -> Self {
        Self::new(seed, family.id(index))
    }

    /// One stream per index in `0..n`.
    pub fn family(seed: u64, family: StreamFamily, n: usize) -> alloc::vec::Vec<Self> {
        (0..n as u64).map(|i| Self::of(seed, family, i)).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Standard Gaussian draw.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn identical_seed_and_stream_reproduce_draws() {
        let mut a = RandomStream::of(7, StreamFamily::Noise, 3);
        let mut b = RandomStream::of(7, StreamFamily::Noise, 3);
        let xa: Vec<f64> = (0..100).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..100).map(|_| b.normal()).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = RandomStream::of(7, StreamFamily::Noise, 0);
        let mut b = RandomStream::of(7, StreamFamily::Noise, 1);
        let mut c = RandomStream::of(7, StreamFamily::Frequency, 0);
        let (x, y, z) = (a.normal(), b.normal(), c.normal());
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn uniform_in_respects_bounds() {
        let mut s = RandomStream::new(1, 0);
        for _ in 0..1000 {
            let u = s.uniform_in(-2.0, 3.0);
            assert!((-2.0..3.0).contains(&u));
        }
    }
}
