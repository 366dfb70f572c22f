//! Seed derivation for reproducible pair generation.
//!
//! Stream version `augrank-rng-v1`: the SHA-256 digest of a tagged, length-prefixed
//! encoding of the seed fields is used as the 256-bit key of a ChaCha20 block
//! generator (counter starts at zero). Uniform doubles take the top 53 bits of each
//! little-endian `u64` output word. See `docs/rng.md` for the byte layout.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::types::TaskKind;

const STREAM_TAG: &[u8] = b"augrank-rng-v1";

/// Identifies one random stream: one pair of one task for one source image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub experiment_seed: u64,
    pub image_id: String,
    pub task: TaskKind,
    pub pair_index: u32,
}

impl SeedSpec {
    pub fn new(experiment_seed: u64, image_id: impl Into<String>, task: TaskKind, pair_index: u32) -> Self {
        Self {
            experiment_seed,
            image_id: image_id.into(),
            task,
            pair_index,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(STREAM_TAG);
        h.update([0u8]);
        h.update(self.experiment_seed.to_le_bytes());
        put_str(&mut h, &self.image_id);
        put_str(&mut h, self.task.as_str());
        h.update(self.pair_index.to_le_bytes());
        h.finalize().into()
    }
}

fn put_str(h: &mut Sha256, s: &str) {
    h.update((s.len() as u64).to_le_bytes());
    h.update(s.as_bytes());
}

/// A deterministic stream of uniform draws.
#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha20Rng,
}

impl StreamRng {
    fn from_key(key: [u8; 32]) -> Self {
        Self {
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    /// Uniform double in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)` by rejection sampling; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle driven by [`StreamRng::below`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Stream for one [`SeedSpec`].
pub fn derive_rng(spec: &SeedSpec) -> StreamRng {
    StreamRng::from_key(spec.key())
}

/// Stream for a named experiment-level purpose (dataset split, batch order, ...).
pub fn derive_named(seed: u64, purpose: &str) -> StreamRng {
    let mut h = Sha256::new();
    h.update(STREAM_TAG);
    h.update([1u8]);
    h.update(seed.to_le_bytes());
    put_str(&mut h, purpose);
    StreamRng::from_key(h.finalize().into())
}
