//! Actor-scoped SplitMix64 streams.
//!
//! The initial state of a stream is
//! `mix(master_seed + mix(key))` where `mix` is the SplitMix64 finalizer and
//! `key` is the stable 64-bit encoding of the owner. `mix` is a bijection on
//! `u64`, so distinct keys under one seed (and distinct seeds under one key)
//! always produce distinct initial states.

use crate::ids::ActorId;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Owners of random streams that are not actors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorldStream {
    Survivors,
    Roads,
    Links,
    Hazard,
}

impl WorldStream {
    pub fn encode(self) -> u64 {
        let n = match self {
            WorldStream::Survivors => 1,
            WorldStream::Roads => 2,
            WorldStream::Links => 3,
            WorldStream::Hazard => 4,
        };
        0xFFFF_0000_0000_0000 | n
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: u64,
}

impl RngStream {
    pub fn from_key(master_seed: u64, key: u64) -> Self {
        Self { state: mix64(master_seed.wrapping_add(mix64(key))) }
    }

    pub fn world(master_seed: u64, stream: WorldStream) -> Self {
        Self::from_key(master_seed, stream.encode())
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw; always consumes exactly one value.
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller (one draw pair per call).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn gaussian(&mut self, mean: f64, sigma: f64) -> f64 {
        mean + sigma * self.standard_normal()
    }

    /// Binomial(n, p) as the sum of `n` Bernoulli draws.
    pub fn binomial(&mut self, n: u32, p: f64) -> u32 {
        (0..n).filter(|_| self.chance(p)).count() as u32
    }

    /// Uniform integer in `[lo, hi)`.
    pub fn below(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo < hi);
        lo + self.next_u64() % (hi - lo)
    }
}

/// Stream for one actor, derived from the run's master seed.
pub fn actor_rng(master_seed: u64, actor: ActorId) -> RngStream {
    RngStream::from_key(master_seed, actor.encode())
}
