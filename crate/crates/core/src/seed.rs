//! 256-bit seeds, labeled derivation and the reproducible draw stream.
//!
//! Everything random in the crate is driven from a [`Seed`]. A run's master
//! seed fans out to per-stage seeds through [`Seed::derive`], so that changing
//! the randomness consumed by one stage never reshuffles another stage.
//!
//! Shared structures that both parties must rebuild independently (factor
//! graphs, Toeplitz hashes) draw from a [`SeedStream`]. Its byte-level
//! behaviour is fixed so another implementation can reproduce it exactly:
//!
//! * the stream is the ChaCha20 keystream (20 rounds, 256-bit key = seed
//!   bytes, 64-bit nonce = 0, block counter starting at 0);
//! * [`SeedStream::next_u32`] returns successive little-endian 32-bit words
//!   of that keystream;
//! * [`SeedStream::below`] draws a uniform integer in `[0, n)` by rejection:
//!   with `limit = n * floor(2^32 / n)`, words `>= limit` are discarded and
//!   the first accepted word `w` yields `w % n`;
//! * [`SeedStream::bits`] consumes whole words, emitting bit `j` of word `w`
//!   (least significant first) as output bit `32 * w + j`.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// A 256-bit seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub [u8; 32]);

#[derive(Debug, thiserror::Error)]
pub enum SeedError {
    #[error("seed must be 64 hex characters, got {0}")]
    BadLength(usize),
    #[error("invalid hex in seed: {0}")]
    BadHex(#[from] hex::FromHexError),
}

impl Seed {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        Seed(bytes)
    }

    /// Seed whose bytes are `value` little-endian followed by zeros. Handy in tests.
    pub fn from_u64(value: u64) -> Self {
        let mut bytes = [0u8; 32];
        bytes[..8].copy_from_slice(&value.to_le_bytes());
        Seed(bytes)
    }

    /// Parses a 64-character hex string. Shorter strings are rejected rather
    /// than padded, so a typo cannot silently weaken a seed.
    pub fn from_hex(s: &str) -> Result<Self, SeedError> {
        let s = s.trim().trim_start_matches("0x");
        if s.len() != 64 {
            return Err(SeedError::BadLength(s.len()));
        }
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(s, &mut bytes)?;
        Ok(Seed(bytes))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Child seed `SHA-256("qkd-seed/v1" || 0x00 || seed || label)`.
    pub fn derive(&self, label: &str) -> Seed {
        let mut h = Sha256::new();
        h.update(b"qkd-seed/v1");
        h.update([0u8]);
        h.update(self.0);
        h.update(label.as_bytes());
        Seed(h.finalize().into())
    }

    /// General-purpose RNG for Monte-Carlo stages.
    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.0)
    }

    pub fn stream(&self) -> SeedStream {
        SeedStream {
            rng: ChaCha20Rng::from_seed(self.0),
        }
    }

    /// Short fingerprint used to tag structures built from this seed.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.0);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}

impl fmt::Debug for Seed {
    // Seeds are key material; only the fingerprint is printed.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({:016x})", self.fingerprint())
    }
}

impl From<[u8; 32]> for Seed {
    fn from(bytes: [u8; 32]) -> Self {
        Seed(bytes)
    }
}

/// Reproducible draw stream; see the module docs for the exact derivation.
pub struct SeedStream {
    rng: ChaCha20Rng,
}

impl SeedStream {
    pub fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u32) -> u32 {
        assert!(n > 0, "below(0)");
        let limit = (1u64 << 32) / u64::from(n) * u64::from(n);
        loop {
            let w = u64::from(self.next_u32());
            if w < limit {
                return (w % u64::from(n)) as u32;
            }
        }
    }

    /// `count` bits as 0/1 bytes.
    pub fn bits(&mut self, count: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let w = self.next_u32();
            for j in 0..32 {
                if out.len() == count {
                    break;
                }
                out.push(((w >> j) & 1) as u8);
            }
        }
        out
    }
}
