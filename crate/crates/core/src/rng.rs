//! Deterministic seed fan-out.
//!
//! A single master seed expands into independent named streams so that
//! subsystems (population sampling, shocks, policy initialisation, rollout
//! collection, the outer optimiser) can be re-derived statelessly:
//!
//! ```text
//! seed(tag, index) = splitmix64(master ^ fnv1a(tag) ^ splitmix64(index * PHI))
//! ```
//!
//! Re-deriving a stream for (master, tag, index) always yields the same
//! generator, which is what makes interrupted runs resumable without
//! serialising RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PHI: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(PHI);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derives the seed for a named stream.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(master ^ fnv1a(tag.as_bytes()) ^ splitmix64(index.wrapping_mul(PHI)))
}

/// A deterministic generator for a named stream.
pub fn stream(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}
