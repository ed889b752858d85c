//! Seeding scheme.
//!
//! Every random stream is a ChaCha8 generator. The key comes from
//! `ChaCha8Rng::seed_from_u64(seed)` and independent streams of the same key
//! are selected with `set_stream(index)`, so replication `r` of a study with
//! master seed `m` always reads stream `r` of key `m`, whatever the execution
//! order. Scalar sub-seeds are derived with the SplitMix64 finalizer.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer of `seed + (tag, index)`; used to derive scalar seeds.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
