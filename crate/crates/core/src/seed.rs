//! Derivation of independent RNG streams from one master seed.
//!
//! Every random decision in the pipeline (split shuffling, augmentation
//! draws, head initialization, batch order, dropout masks) draws from a
//! stream keyed by `(master seed, purpose tag, indices...)`. Streams for
//! different keys are unrelated, so adding an item never perturbs the
//! draws made for another.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Seed used by the reference training setup.
pub const DEFAULT_MASTER_SEED: u64 = 46;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// One step of the SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over raw bytes.
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Derives the 64-bit key of a stream.
pub fn derive(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut key = mix64(master ^ hash_bytes(tag.as_bytes()));
    for &i in indices {
        key = mix64(key ^ mix64(i));
    }
    key
}

/// Seeded stream for `(master, tag, indices)`.
pub fn stream(master: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, tag, indices))
}

/// Uniform draw in `[0, 1)` with 53 bits of resolution.
pub fn unit<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`; returns `lo` when the interval is empty.
pub fn uniform<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u = unit(rng);
    if hi > lo {
        lo + (hi - lo) * u
    } else {
        lo
    }
}

/// Uniform index in `[0, n)`, `n > 0`, by rejection (no modulo bias).
pub fn below<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

/// Fisher-Yates shuffle driven by `rng`.
pub fn shuffle<T, R: RngCore>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
