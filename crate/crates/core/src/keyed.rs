//! Per-example random streams keyed by content instead of position.
//!
//! Each draw derives a fresh ChaCha8 stream from the SHA-256 of a domain tag,
//! integer parts (seed, step, ...) and string parts (language, example id).
//! A given example therefore gets the same draws no matter which other
//! examples exist or in which order they are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone)]
pub struct Key {
    hasher: Sha256,
}

impl Key {
    pub fn new(domain: &str) -> Self {
        let mut k = Key { hasher: Sha256::new() };
        k.push_bytes(domain.as_bytes());
        k
    }

    fn push_bytes(&mut self, bytes: &[u8]) {
        // Length prefix keeps ("ab","c") distinct from ("a","bc").
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn int(mut self, v: i64) -> Self {
        self.hasher.update(b"i");
        self.hasher.update(v.to_le_bytes());
        self
    }

    pub fn str(mut self, s: &str) -> Self {
        self.hasher.update(b"s");
        self.push_bytes(s.as_bytes());
        self
    }

    fn digest(self) -> [u8; 32] {
        self.hasher.finalize().into()
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.digest())
    }

    /// A 64-bit value uniformly spread over the key space, for orderings.
    pub fn value(self) -> u64 {
        let d = self.digest();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}
