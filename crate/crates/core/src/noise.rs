//! Counter-based Gaussian noise.
//!
//! Every standard normal draw is addressed by `(seed, domain, stream, index)`:
//! the key comes from the seed and domain, the ChaCha stream id is the
//! replication number, and the word position is derived from the 1-based
//! coefficient index. Any draw can be regenerated in isolation, so results do
//! not depend on how replications are split across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

/// Number of 32-bit ChaCha words consumed by one normal draw (two `u64`s).
const WORDS_PER_DRAW: u128 = 4;

/// Independent families of draws derived from the same user seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Noise `xi_k` in `y_k = theta_k + sigma_k xi_k`.
    Observation,
    /// Noise used for the Monte Carlo hull paths `eta_N`.
    Hull,
}

impl Domain {
    fn tag(self) -> &'static [u8] {
        match self {
            Domain::Observation => b"rhm/observation",
            Domain::Hull => b"rhm/hull",
        }
    }
}

/// Source of standard normal draws `xi_k`, indexed by stream and 1-based `k`.
pub trait NoiseSource: Sync {
    /// Fills `out` with `xi_first, xi_{first+1}, ...` for the given stream.
    fn fill(&self, stream: u64, first: usize, out: &mut [f64]);
}

#[derive(Clone, Debug)]
pub struct CounterNoise {
    key: [u8; 32],
}

impl CounterNoise {
    pub fn new(seed: u64, domain: Domain) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(domain.tag());
        hasher.update(seed.to_le_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self { key }
    }

    pub fn observation(seed: u64) -> Self {
        Self::new(seed, Domain::Observation)
    }

    pub fn hull(seed: u64) -> Self {
        Self::new(seed, Domain::Hull)
    }

    /// A single draw; mainly useful for spot checks.
    pub fn draw(&self, stream: u64, k: usize) -> f64 {
        let mut out = [0.0];
        self.fill(stream, k, &mut out);
        out[0]
    }
}

impl NoiseSource for CounterNoise {
    fn fill(&self, stream: u64, first: usize, out: &mut [f64]) {
        assert!(first >= 1, "noise indices are 1-based");
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream);
        rng.set_word_pos((first as u128 - 1) * WORDS_PER_DRAW);
        for slot in out.iter_mut() {
            *slot = box_muller(rng.next_u64(), rng.next_u64());
        }
    }
}

/// Box-Muller transform keeping only the cosine branch, so each draw owns a
/// fixed pair of words.
fn box_muller(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Noise source replaying a fixed vector for every stream (tests, forced draws).
#[derive(Clone, Debug)]
pub struct FixedNoise(pub Vec<f64>);

impl NoiseSource for FixedNoise {
    fn fill(&self, _stream: u64, first: usize, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.0[first - 1 + i];
        }
    }
}

/// Noise source returning the same value everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantNoise(pub f64);

impl NoiseSource for ConstantNoise {
    fn fill(&self, _stream: u64, _first: usize, out: &mut [f64]) {
        out.fill(self.0);
    }
}
