mod common;

use common::*;
use moqe::baselines::cnn::{evaluate_cnn, CnnLayout};
use moqe::baselines::quadratic::evaluate_quadratic;
use moqe::baselines::{
    avg_pool_2x2, cnn_backward, cnn_forward, conv2d_3x3, count_params, quad_output, train_cnn,
    train_quadratic, BaselineConfig, QuadraticClassifier, Tensor, TinyCnn, TinyCnnConfig, QUADRATIC_PARAMS,
};
use moqe::encoding::PaddedImage;
use moqe::mnist::{RawSample, PIXELS};
use moqe::optim::AdamConfig;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_tensor(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor {
    Tensor::from_vec(h, w, c, (0..h * w * c).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn naive_conv(input: &Tensor, k: &[f64], b: &[f64]) -> Vec<Vec<Vec<f64>>> {
    let (h, w, cin) = input.shape();
    let cout = b.len();
    let mut out = vec![vec![vec![0.0; cout]; w]; h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for co in 0..cout {
                let mut s = b[co];
                for ky in 0..3i64 {
                    for kx in 0..3i64 {
                        let (sy, sx) = (y + ky - 1, x + kx - 1);
                        if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                            continue;
                        }
                        for ci in 0..cin {
                            let wt = k[((ky * 3 + kx) as usize * cin + ci) * cout + co];
                            s += wt * input.get(sy as usize, sx as usize, ci);
                        }
                    }
                }
                out[y as usize][x as usize][co] = s;
            }
        }
    }
    out
}

fn naive_pool(v: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let (h, w, c) = (v.len(), v[0].len(), v[0][0].len());
    let mut out = vec![vec![vec![0.0; c]; w / 2]; h / 2];
    for y in 0..h / 2 {
        for x in 0..w / 2 {
            for ch in 0..c {
                out[y][x][ch] = (v[2 * y][2 * x][ch]
                    + v[2 * y + 1][2 * x][ch]
                    + v[2 * y][2 * x + 1][ch]
                    + v[2 * y + 1][2 * x + 1][ch])
                    / 4.0;
            }
        }
    }
    out
}

fn to_tensor(v: &[Vec<Vec<f64>>]) -> Tensor {
    let (h, w, c) = (v.len(), v[0].len(), v[0][0].len());
    Tensor::from_vec(h, w, c, v.iter().flatten().flatten().copied().collect()).unwrap()
}

/// Offsets rebuilt by hand: per stage kernel then bias, then the head.
fn manual_offsets(cfg: &TinyCnnConfig) -> (Vec<(usize, usize)>, usize) {
    let ch = [cfg.c1, cfg.c2, cfg.c3, cfg.c4];
    let mut blocks = Vec::new();
    let mut at = 0;
    let mut cin = 1;
    for &c in &ch {
        blocks.push((at, 9 * cin * c));
        at += 9 * cin * c;
        blocks.push((at, c));
        at += c;
        cin = c;
    }
    for len in [4 * cfg.c4 * cfg.h, cfg.h, cfg.h, 1] {
        blocks.push((at, len));
        at += len;
    }
    (blocks, at)
}

/// Forward pass written against nested vectors and the hand-built layout.
fn reference_forward(model: &TinyCnn, img: &PaddedImage) -> f64 {
    let cfg = *model.config();
    let p = model.params();
    let (blocks, _) = manual_offsets(&cfg);
    let seg = |i: usize| &p[blocks[i].0..blocks[i].0 + blocks[i].1];
    let mut x: Vec<Vec<Vec<f64>>> = img.pixels().iter().map(|row| row.iter().map(|&v| vec![v]).collect()).collect();
    for s in 0..4 {
        let mut c = naive_conv(&to_tensor(&x), seg(2 * s), seg(2 * s + 1));
        c.iter_mut().flatten().flatten().for_each(|v| *v = v.max(0.0));
        x = naive_pool(&c);
    }
    let flat: Vec<f64> = x.iter().flatten().flatten().copied().collect();
    let (w1, b1, w2, b2) = (seg(8), seg(9), seg(10), seg(11));
    let mut out = b2[0];
    for j in 0..cfg.h {
        let mut a = b1[j];
        for (i, v) in flat.iter().enumerate() {
            a += w1[j * flat.len() + i] * v;
        }
        out += w2[j] * a.max(0.0);
    }
    out
}

fn random_cfg(r: &mut ChaCha8Rng) -> TinyCnnConfig {
    TinyCnnConfig::new(std::array::from_fn(|_| r.gen_range(1..=4)), r.gen_range(1..=4)).unwrap()
}

#[test]
fn conv_trivial_cases() {
    let mut r = rng(60);
    let t = random_tensor(&mut r, 5, 6, 1);
    let mut ident = [0.0; 9];
    ident[4] = 1.0;
    assert_eq!(conv2d_3x3(&t, &ident, &[0.0]).unwrap(), t);
    let ones = Tensor::from_vec(5, 5, 1, vec![1.0; 25]).unwrap();
    let out = conv2d_3x3(&ones, &[1.0; 9], &[0.0]).unwrap();
    assert_eq!(out.get(2, 2, 0), 9.0);
    assert_eq!(out.get(0, 0, 0), 4.0);
}

#[test]
fn conv_matches_naive_loops() {
    let mut r = rng(61);
    for _ in 0..20 {
        let (h, w, cin, cout) = (r.gen_range(1..9), r.gen_range(1..9), r.gen_range(1..4), r.gen_range(1..4));
        let t = random_tensor(&mut r, h, w, cin);
        let k: Vec<f64> = (0..9 * cin * cout).map(|_| r.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..cout).map(|_| r.gen_range(-1.0..1.0)).collect();
        let fast = conv2d_3x3(&t, &k, &b).unwrap();
        let slow = to_tensor(&naive_conv(&t, &k, &b));
        assert!(fast.data().iter().zip(slow.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn pooling_matches_naive_and_preserves_mean() {
    let mut r = rng(62);
    for _ in 0..20 {
        let (h, w, c) = (2 * r.gen_range(1..6), 2 * r.gen_range(1..6), r.gen_range(1..4));
        // quarter-integers keep every sum exact
        let data: Vec<f64> = (0..h * w * c).map(|_| r.gen_range(-40..40) as f64 / 4.0).collect();
        let t = Tensor::from_vec(h, w, c, data).unwrap();
        let nested: Vec<Vec<Vec<f64>>> = (0..h)
            .map(|y| (0..w).map(|x| (0..c).map(|ch| t.get(y, x, ch)).collect()).collect())
            .collect();
        let p = avg_pool_2x2(&t).unwrap();
        assert_eq!(p, to_tensor(&naive_pool(&nested)));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert_eq!(mean(p.data()), mean(t.data()));
    }
    let c = Tensor::from_vec(4, 4, 1, vec![0.7; 16]).unwrap();
    assert!(avg_pool_2x2(&c).unwrap().data().iter().all(|&v| v == 0.7));
}

#[test]
fn parameter_counts_match_enumeration() {
    let mut r = rng(63);
    for _ in 0..20 {
        let cfg = random_cfg(&mut r);
        let (blocks, total) = manual_offsets(&cfg);
        assert_eq!(count_params(&cfg), total);
        assert_eq!(TinyCnn::zeros(cfg).unwrap().param_count(), total);
        let layout = CnnLayout::new(&cfg);
        let lens: Vec<usize> = layout.blocks().iter().map(|b| b.len()).collect();
        assert_eq!(lens, blocks.iter().map(|b| b.1).collect::<Vec<_>>());
    }
}

#[test]
fn forward_matches_reference_implementation() {
    let mut r = rng(64);
    for k in 0..6 {
        let cfg = if k == 0 { TinyCnnConfig::default() } else { random_cfg(&mut r) };
        let model = TinyCnn::init(cfg, k).unwrap();
        let img = random_image(&mut r);
        let (a, b) = (cnn_forward(&model, &img), reference_forward(&model, &img));
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn zero_weights_output_final_bias() {
    let cfg = TinyCnnConfig::default();
    let mut model = TinyCnn::zeros(cfg).unwrap();
    let last = model.param_count() - 1;
    model.params_mut()[last] = -0.375;
    assert_eq!(cnn_forward(&model, &random_image(&mut rng(65))), -0.375);
}

fn loss(model: &TinyCnn, img: &PaddedImage, label: f64) -> f64 {
    (cnn_forward(model, img) - label).powi(2)
}

#[test]
fn backward_matches_finite_differences() {
    let mut r = rng(66);
    for k in 0..10 {
        let cfg = random_cfg(&mut r);
        let mut model = TinyCnn::init(cfg, 100 + k).unwrap();
        for b in model.layout().blocks() {
            if b.len() <= 4 {
                for v in &mut model.params_mut()[b] {
                    *v = r.gen_range(0.0..0.2);
                }
            }
        }
        let img = random_image(&mut r);
        let label = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        let grad = cnn_backward(&model, &img, label);
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let h = 1e-5;
        let mut probe = model.clone();
        for i in 0..grad.len() {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + h;
            let plus = loss(&probe, &img, label);
            probe.params_mut()[i] = orig - h;
            let minus = loss(&probe, &img, label);
            probe.params_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-5 * scale, "cfg {cfg:?} param {i}: {fd} vs {}", grad[i]);
        }
    }
}

#[test]
fn exact_fit_gives_zero_gradient() {
    let model = TinyCnn::init(TinyCnnConfig::default(), 5).unwrap();
    let img = random_image(&mut rng(67));
    let f = cnn_forward(&model, &img);
    assert!(cnn_backward(&model, &img, f).iter().all(|&g| g == 0.0));
}

#[test]
fn dead_relu_channel_gets_no_gradient() {
    let cfg = TinyCnnConfig::new([3, 2, 2, 2], 2).unwrap();
    let mut model = TinyCnn::init(cfg, 6).unwrap();
    let layout = model.layout().clone();
    // channel 0 of the first stage can never turn on for pixels in [0, 1]
    for tap in 0..9 {
        model.params_mut()[layout.kernels[0].start + tap * 3] = -1.0;
    }
    model.params_mut()[layout.biases[0].start] = -1.0;
    let g = cnn_backward(&model, &random_image(&mut rng(68)), 1.0);
    assert!((0..9).all(|tap| g[layout.kernels[0].start + tap * 3] == 0.0));
    assert_eq!(g[layout.biases[0].start], 0.0);
    // that channel feeds second-stage weights with zero input
    for tap in 0..9 {
        for co in 0..2 {
            assert_eq!(g[layout.kernels[1].start + (tap * 3) * 2 + co], 0.0);
        }
    }
}

/// `[1, p_i, p_i p_j (i <= j)]` written out in full.
fn materialized_features(p: &[f64; PIXELS]) -> Vec<f64> {
    let mut phi = Vec::with_capacity(QUADRATIC_PARAMS);
    phi.push(1.0);
    phi.extend_from_slice(p);
    for i in 0..PIXELS {
        for j in i..PIXELS {
            phi.push(p[i] * p[j]);
        }
    }
    phi
}

#[test]
fn quadratic_output_matches_materialized_features() {
    let mut r = rng(69);
    for _ in 0..5 {
        let params: Vec<f64> = (0..QUADRATIC_PARAMS).map(|_| r.gen_range(-1.0..1.0)).collect();
        let model = QuadraticClassifier::from_params(params.clone()).unwrap();
        let px = random_image(&mut r).interior();
        let phi = materialized_features(&px);
        assert_eq!(phi.len(), 308_505);
        let direct: f64 = phi.iter().zip(&params).map(|(a, b)| a * b).sum();
        let reversed: f64 = phi.iter().zip(&params).rev().map(|(a, b)| a * b).sum();
        let fast = quad_output(&model, &px);
        assert!((fast - direct).abs() < 1e-12 * direct.abs().max(1.0));
        assert!((fast - reversed).abs() < 1e-12 * direct.abs().max(1.0));

        let mut grad = vec![0.0; QUADRATIC_PARAMS];
        model.accumulate_gradient(&px, 0.5, &mut grad);
        assert!(grad.iter().zip(&phi).all(|(g, f)| *g == 0.5 * f));
    }
}

#[test]
fn quadratic_trivial_outputs() {
    let mut params = vec![0.0; QUADRATIC_PARAMS];
    params[0] = 0.25;
    params[1 + 5] = 3.0;
    let m = QuadraticClassifier::from_params(params).unwrap();
    assert_eq!(quad_output(&m, &[0.0; PIXELS]), 0.25);
    let px = random_image(&mut rng(70)).interior();
    assert_eq!(quad_output(&QuadraticClassifier::zeros(), &px), 0.0);
}

fn synthetic(n: usize, seed: u64) -> Vec<RawSample> {
    let mut r = rng(seed);
    (0..n).map(|_| random_sample(&mut r)).collect()
}

#[test]
fn quadratic_fits_toy_subset() {
    let data = synthetic(64, 71);
    let refs: Vec<&RawSample> = data.iter().collect();
    let cfg = BaselineConfig {
        epochs: 200,
        adam: AdamConfig { learning_rate: 1e-5, ..Default::default() },
        ..Default::default()
    };
    let (model, m) = train_quadratic(&refs, &[], &cfg, |_| {}).unwrap();
    assert_eq!(m.final_train_accuracy, Some(1.0));
    assert_eq!(evaluate_quadratic(&model, &refs).unwrap(), 1.0);
}

#[test]
fn zero_learning_rate_leaves_baselines_untrained() {
    let data = synthetic(20, 72);
    let refs: Vec<&RawSample> = data.iter().collect();
    let cfg = BaselineConfig {
        epochs: 2,
        adam: AdamConfig { learning_rate: 0.0, ..Default::default() },
        seed: 9,
        ..Default::default()
    };
    let (quad, _) = train_quadratic(&refs, &[], &cfg, |_| {}).unwrap();
    assert_eq!(quad, QuadraticClassifier::zeros());
    let ccfg = TinyCnnConfig::new([2, 2, 2, 2], 2).unwrap();
    let (cnn, m) = train_cnn(&refs, &refs, ccfg, &cfg, |_| {}).unwrap();
    let untrained = TinyCnn::init(ccfg, 9).unwrap();
    assert_eq!(cnn, untrained);
    assert_eq!(m.records[1].test_acc, Some(evaluate_cnn(&untrained, &refs).unwrap()));
}

#[test]
fn cnn_training_reduces_loss() {
    let data = synthetic(32, 73);
    let refs: Vec<&RawSample> = data.iter().collect();
    let cfg = BaselineConfig {
        epochs: 40,
        adam: AdamConfig { learning_rate: 3e-3, ..Default::default() },
        ..Default::default()
    };
    let (_, m) = train_cnn(&refs, &[], TinyCnnConfig::default(), &cfg, |_| {}).unwrap();
    assert!(m.records.last().unwrap().mean_loss < 0.5 * m.records[0].mean_loss);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn odd_pool_dims_rejected(h in 1usize..9, w in 1usize..9) {
        let t = Tensor::zeros(h, w, 1);
        prop_assert_eq!(avg_pool_2x2(&t).is_ok(), h % 2 == 0 && w % 2 == 0);
    }
}
