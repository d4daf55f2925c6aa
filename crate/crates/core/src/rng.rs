//! Named random streams.
//!
//! Every consumer of randomness asks for a stream by `(seed, purpose tag)`.
//! Streams are ChaCha8 counter-mode keystreams, so the draws of one purpose
//! never shift when another purpose starts drawing more or fewer values.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Stream for `tag` under `seed`.
pub fn stream(seed: u64, tag: &str) -> Stream {
    indexed_stream(seed, tag, 0)
}

/// Stream for the `index`-th item of a purpose, e.g. one per sample.
pub fn indexed_stream(seed: u64, tag: &str, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = fnv1a(&index.to_le_bytes(), fnv1a(tag.as_bytes(), FNV_OFFSET));
    rng.set_stream(id);
    rng
}

/// A fresh 64-bit seed for the `index`-th item of a purpose.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    indexed_stream(seed, tag, index).next_u64()
}
