//! Keyed normal streams.
//!
//! Draws are addressed by `(seed, sample, domain)` for the ChaCha key, the
//! mode index for the ChaCha stream and the step index for the word position,
//! so every normal pair is a pure function of its coordinates and results do
//! not depend on generation order or thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

/// Words consumed by one step: two `u64` draws for one Box-Muller pair.
const WORDS_PER_STEP: u128 = 4;

/// Separates independent uses of the same seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    FinePath = 1,
    Counterexample = 2,
    Diagnostics = 3,
}

/// Provenance of one random stream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub sample: u64,
    pub domain: Domain,
}

impl StreamKey {
    pub fn new(seed: u64, sample: u64, domain: Domain) -> Self {
        Self {
            seed,
            sample,
            domain,
        }
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.sample.to_le_bytes());
        key[16..24].copy_from_slice(&(self.domain as u64).to_le_bytes());
        key[24..].copy_from_slice(b"splitflw");
        key
    }

    /// Sequential normal pairs for `stream`, starting at `step`.
    pub fn normals(&self, stream: u64, step: u64) -> NormalStream {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(stream);
        rng.set_word_pos(u128::from(step) * WORDS_PER_STEP);
        NormalStream { rng }
    }
}

pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    /// Next pair of independent standard normals.
    #[inline]
    pub fn next_pair(&mut self) -> (f64, f64) {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }
}

/// Pair of independent standard normals addressed by `(key, mode, step)`.
pub fn rng_stream(key: StreamKey, mode: u64, step: u64) -> (f64, f64) {
    key.normals(mode, step).next_pair()
}
