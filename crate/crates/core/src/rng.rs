//! Named, serializable random streams.
//!
//! One master seed fans out into independent ChaCha streams keyed by a name
//! (`"env"`, `"agent/exploration"`, ...), so adding draws to one component
//! never perturbs another. A stream's full position can be saved and restored
//! for exact resume.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Byte length of [`Stream::to_bytes`].
pub const STREAM_STATE_LEN: usize = 32 + 8 + 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    inner: ChaCha8Rng,
}

fn stream_id(name: &str) -> u64 {
    // FNV-1a; only needs to be stable, not strong.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl Stream {
    /// Derives the stream `name` from `master_seed`.
    pub fn derive(master_seed: u64, name: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id(name));
        Self { inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn to_bytes(&self) -> [u8; STREAM_STATE_LEN] {
        let mut out = [0u8; STREAM_STATE_LEN];
        out[..32].copy_from_slice(&self.inner.get_seed());
        out[32..40].copy_from_slice(&self.inner.get_stream().to_le_bytes());
        out[40..].copy_from_slice(&self.inner.get_word_pos().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != STREAM_STATE_LEN {
            return Err(Error::Decode(alloc::format!(
                "rng state must be {STREAM_STATE_LEN} bytes, got {}",
                bytes.len()
            )));
        }
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&bytes[..32]);
        let mut inner = ChaCha8Rng::from_seed(seed);
        inner.set_stream(u64::from_le_bytes(bytes[32..40].try_into().unwrap()));
        inner.set_word_pos(u128::from_le_bytes(bytes[40..].try_into().unwrap()));
        Ok(Self { inner })
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> core::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
