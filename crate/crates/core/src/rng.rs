//! Counter-based uniform stream.
//!
//! ChaCha20 keyed by the seed (little-endian in key bytes 0..8, remaining key
//! bytes zero, stream 0). Draw `k` is the 64-bit word at keystream position
//! `2k` (low 32-bit word first), mapped to `((x >> 12) + 0.5) · 2⁻⁵²`. The sum
//! is exact in f64, so every uniform lies strictly inside `(0, 1)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const GENERATOR_ID: &str = "chacha20-stream0-key=seed_le64-u52mid";

#[derive(Debug, Clone)]
pub struct UniformStream {
    inner: ChaCha20Rng,
}

fn key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key
}

pub fn to_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

impl UniformStream {
    /// Stream positioned at draw 0.
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::from_seed(key(seed)),
        }
    }

    /// Stream positioned at draw `index`.
    pub fn at(seed: u64, index: u64) -> Self {
        let mut s = Self::new(seed);
        s.inner.set_word_pos(2 * index as u128);
        s
    }

    pub fn next_raw(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_uniform(&mut self) -> f64 {
        to_unit(self.next_raw())
    }
}

/// Draw `index` of the stream for `seed`, by random access.
pub fn uniform_at(seed: u64, index: u64) -> f64 {
    UniformStream::at(seed, index).next_uniform()
}
