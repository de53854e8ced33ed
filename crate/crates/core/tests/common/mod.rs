#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use moqe::encoding::{pad_image, PaddedImage};
use moqe::mnist::{RawSample, PIXELS};
use moqe::state::{Unitary2, Unitary4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A digit-like sparse image: a random blob of bright pixels.
pub fn random_raw(rng: &mut ChaCha8Rng) -> [u8; PIXELS] {
    let density = rng.gen_range(0.1..0.4);
    let mut px = [0u8; PIXELS];
    for p in px.iter_mut() {
        if rng.gen_bool(density) {
            *p = rng.gen_range(1..=255);
        }
    }
    px[rng.gen_range(0..PIXELS)] = 255;
    px
}

pub fn random_image(rng: &mut ChaCha8Rng) -> PaddedImage {
    pad_image(&random_raw(rng)).unwrap()
}

pub fn random_sample(rng: &mut ChaCha8Rng) -> RawSample {
    RawSample::new(random_raw(rng), rng.gen_range(0..10)).unwrap()
}

pub fn random_angles(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-PI..PI)).collect()
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}

/// `e^{i a} Rz(b) Ry(c) Rz(d)`.
pub fn random_unitary2(rng: &mut ChaCha8Rng) -> Unitary2 {
    let [a, b, c, d]: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-PI..PI));
    let ph = Complex64::from_polar(1.0, a);
    let rz = |t: f64| {
        Unitary2([
            [Complex64::from_polar(1.0, -t / 2.0), Complex64::default()],
            [Complex64::default(), Complex64::from_polar(1.0, t / 2.0)],
        ])
    };
    let m = mul2(&mul2(&rz(b), &Unitary2::ry(c)), &rz(d));
    Unitary2(m.0.map(|row| row.map(|x| x * ph)))
}

fn mul2(a: &Unitary2, b: &Unitary2) -> Unitary2 {
    let mut out = [[Complex64::default(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a.0[i][0] * b.0[0][j] + a.0[i][1] * b.0[1][j];
        }
    }
    Unitary2(out)
}

/// Entangling random unitary: local layer, CNOT, local layer.
pub fn random_unitary4(rng: &mut ChaCha8Rng) -> Unitary4 {
    let l1 = Unitary4::kron(&random_unitary2(rng), &random_unitary2(rng));
    let l2 = Unitary4::kron(&random_unitary2(rng), &random_unitary2(rng));
    l2.matmul(&Unitary4::cnot()).matmul(&l1)
}

pub fn max_dev(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `MNIST_DIR`, else the workspace `data/mnist`, when it holds the files.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    moqe::mnist::MnistFile::ALL
        .iter()
        .all(|f| f.locate(&dir).is_ok())
        .then_some(dir)
}
