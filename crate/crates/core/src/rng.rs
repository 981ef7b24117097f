//! Seeded randomness.
//!
//! Every random decision draws from a ChaCha8 stream whose 32-byte key is
//! `SHA-256("qadst-rng-v1" || len(purpose) || purpose || seed || index)` with
//! integers little-endian. Substreams are keyed by record index, so any shard
//! of a corpus can be regenerated on its own and merging shards in index order
//! reproduces the serial output.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

const DOMAIN_TAG: &[u8] = b"qadst-rng-v1";

pub fn substream(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN_TAG);
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.update(index.to_le_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Derives a child seed for a named purpose (used to split one `--seed`
/// between subcommands).
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    substream(seed, purpose, u64::MAX).next_u64()
}

/// Uniform in `[0, 1)` with 53 bits of precision.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `0..n` by rejection on the top of the u64 range. `n` must be > 0.
pub fn below(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "below(0)");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return (x % n) as usize;
        }
    }
}

/// Stable 64-bit digest of a string.
pub fn digest64(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
