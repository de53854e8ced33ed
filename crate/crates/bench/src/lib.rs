//! Seeded inputs shared by the benchmarks.

use moqe::mnist::{RawSample, PIXELS};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A sparse digit-like image with density close to MNIST's.
pub fn sample(r: &mut impl Rng) -> RawSample {
    let mut px = [0u8; PIXELS];
    for p in px.iter_mut() {
        if r.gen_bool(0.19) {
            *p = r.gen_range(1..=255);
        }
    }
    RawSample::new(px, r.gen_range(0..10)).unwrap()
}

pub fn samples(n: usize, seed: u64) -> Vec<RawSample> {
    let mut r = rng(seed);
    (0..n).map(|_| sample(&mut r)).collect()
}

pub fn angles(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.gen_range(-PI..PI)).collect()
}
