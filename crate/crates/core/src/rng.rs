//! Seeded randomness.
//!
//! Every random draw in the crate comes from `ChaCha8Rng::seed_from_u64`
//! (rand_chacha 0.3). Independent purposes derive independent streams by
//! mixing a fixed tag into the run seed, so e.g. the dataset split and the
//! parameter initialization of the same run never share a stream.
//! Shuffles use `rand` 0.8 `SliceRandom::shuffle`, a Fisher-Yates pass from
//! the last index down, drawing `j` uniformly in `0..=i` for each `i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 0x5350_4c49_5400_0001;
pub const STREAM_INIT: u64 = 0x494e_4954_0000_0002;
pub const STREAM_EPOCH: u64 = 0x4550_4f43_4800_0003;

/// Generator for `purpose` under `seed`.
pub fn stream(seed: u64, purpose: u64) -> Rng {
    // splitmix64 finalizer over the xor so nearby seeds land far apart
    let mut z = seed ^ purpose;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}
