//! Small convolutional network: four conv/ReLU/pool stages on the padded
//! 32x32 image, then a two-layer fully connected head with one output.
//!
//! Tensors are height x width x channels, row-major with channels fastest.
//! Conv kernels are stored `[ky][kx][c_in][c_out]`, followed by `c_out`
//! biases. The hidden layer weights are `[out][in]`.

use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BaselineConfig;
use crate::encoding::{PaddedImage, GRID};
use crate::error::{Error, Result};
use crate::metrics::{EpochRecord, Metrics};
use crate::moqe::{sign_label, LabeledImage};
use crate::optim::Adam;
use crate::rng;

pub const STAGES: usize = 4;
const FINAL_SIDE: usize = GRID >> STAGES;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::Shape(format!(
                "{h}x{w}x{c} tensor needs {} values, got {}",
                h * w * c,
                data.len()
            )));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn from_image(img: &PaddedImage) -> Self {
        let data = img.pixels().iter().flatten().copied().collect();
        Self {
            h: GRID,
            w: GRID,
            c: 1,
            data,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.c)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, ch: usize) -> usize {
        (y * self.w + x) * self.c + ch
    }

    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.index(y, x, ch)]
    }
}

fn check_conv_shapes(input: &Tensor, kernel: &[f64], cout: usize) -> Result<()> {
    if input.h == 0 || input.w == 0 || input.c == 0 || cout == 0 {
        return Err(Error::Shape("convolution needs nonempty input and output".into()));
    }
    if kernel.len() != 9 * input.c * cout {
        return Err(Error::Shape(format!(
            "3x3 kernel for {} -> {cout} channels needs {} weights, got {}",
            input.c,
            9 * input.c * cout,
            kernel.len()
        )));
    }
    Ok(())
}

/// Visits every (output pixel, tap) pair that lands inside the input.
#[inline]
fn for_each_tap(h: usize, w: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
    for y in 0..h {
        for x in 0..w {
            for ky in 0..3 {
                let Some(sy) = (y + ky).checked_sub(1).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..3 {
                    let Some(sx) = (x + kx).checked_sub(1).filter(|&v| v < w) else {
                        continue;
                    };
                    f(y, x, sy, sx, ky * 3 + kx);
                }
            }
        }
    }
}

/// Stride 1, zero padding 1; `cout = bias.len()`.
pub fn conv2d_3x3(input: &Tensor, kernel: &[f64], bias: &[f64]) -> Result<Tensor> {
    let (cin, cout) = (input.c, bias.len());
    check_conv_shapes(input, kernel, cout)?;
    let mut out = Tensor::zeros(input.h, input.w, cout);
    for px in out.data.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    for_each_tap(input.h, input.w, |y, x, sy, sx, tap| {
        let src = &input.data[input.index(sy, sx, 0)..][..cin];
        let o = (y * input.w + x) * cout;
        let dst = &mut out.data[o..o + cout];
        for (ci, &v) in src.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let k = &kernel[(tap * cin + ci) * cout..][..cout];
            for (d, &kw) in dst.iter_mut().zip(k) {
                *d += v * kw;
            }
        }
    });
    Ok(out)
}

/// Accumulates kernel and bias gradients; returns the input gradient when asked.
fn conv2d_3x3_backward(
    input: &Tensor,
    kernel: &[f64],
    d_out: &Tensor,
    d_kernel: &mut [f64],
    d_bias: &mut [f64],
    want_input: bool,
) -> Option<Tensor> {
    let (cin, cout) = (input.c, d_out.c);
    for px in d_out.data.chunks_exact(cout) {
        for (b, &g) in d_bias.iter_mut().zip(px) {
            *b += g;
        }
    }
    let mut d_in = want_input.then(|| Tensor::zeros(input.h, input.w, cin));
    for_each_tap(input.h, input.w, |y, x, sy, sx, tap| {
        let g = &d_out.data[(y * input.w + x) * cout..][..cout];
        let base = input.index(sy, sx, 0);
        for ci in 0..cin {
            let v = input.data[base + ci];
            let row = (tap * cin + ci) * cout;
            let dk = &mut d_kernel[row..row + cout];
            for (d, &gv) in dk.iter_mut().zip(g) {
                *d += v * gv;
            }
            if let Some(d_in) = d_in.as_mut() {
                let k = &kernel[row..row + cout];
                d_in.data[base + ci] += k.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    });
    d_in
}

pub fn avg_pool_2x2(input: &Tensor) -> Result<Tensor> {
    if !input.h.is_multiple_of(2) || !input.w.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "2x2 pooling needs even dimensions, got {}x{}",
            input.h, input.w
        )));
    }
    let mut out = Tensor::zeros(input.h / 2, input.w / 2, input.c);
    for y in 0..out.h {
        for x in 0..out.w {
            for ch in 0..input.c {
                let s = input.get(2 * y, 2 * x, ch)
                    + input.get(2 * y, 2 * x + 1, ch)
                    + input.get(2 * y + 1, 2 * x, ch)
                    + input.get(2 * y + 1, 2 * x + 1, ch);
                let i = out.index(y, x, ch);
                out.data[i] = 0.25 * s;
            }
        }
    }
    Ok(out)
}

fn avg_pool_2x2_backward(d_out: &Tensor) -> Tensor {
    let mut d_in = Tensor::zeros(2 * d_out.h, 2 * d_out.w, d_out.c);
    for y in 0..d_in.h {
        for x in 0..d_in.w {
            for ch in 0..d_in.c {
                let i = d_in.index(y, x, ch);
                d_in.data[i] = 0.25 * d_out.get(y / 2, x / 2, ch);
            }
        }
    }
    d_in
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinyCnnConfig {
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub c4: usize,
    pub h: usize,
}

impl Default for TinyCnnConfig {
    fn default() -> Self {
        Self {
            c1: 8,
            c2: 8,
            c3: 8,
            c4: 8,
            h: 4,
        }
    }
}

impl TinyCnnConfig {
    pub fn new(channels: [usize; 4], h: usize) -> Result<Self> {
        let [c1, c2, c3, c4] = channels;
        let cfg = Self { c1, c2, c3, c4, h };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn channels(&self) -> [usize; 4] {
        [self.c1, self.c2, self.c3, self.c4]
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels().contains(&0) || self.h == 0 {
            return Err(Error::InvalidConfig(format!(
                "CNN channel counts and hidden width must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn flatten_len(&self) -> usize {
        FINAL_SIDE * FINAL_SIDE * self.c4
    }
}

/// Kernel, bias and dense-layer counts with every bias included.
pub fn count_params(cfg: &TinyCnnConfig) -> usize {
    CnnLayout::new(cfg).total
}

/// Reference parameter counts for the published CNN variants, keyed by `(c1..c4, h)`.
pub const PUBLISHED_PARAM_COUNTS: [([usize; 4], usize, usize); 6] = [
    ([2, 2, 2, 4], 4, 175),
    ([2, 4, 4, 4], 4, 465),
    ([4, 4, 4, 8], 8, 905),
    ([8, 8, 8, 8], 4, 1969),
    ([16, 16, 8, 4], 2, 3969),
    ([32, 16, 12, 8], 8, 7829),
];

pub fn published_param_count(cfg: &TinyCnnConfig) -> Option<usize> {
    PUBLISHED_PARAM_COUNTS
        .iter()
        .find(|(c, h, _)| *c == cfg.channels() && *h == cfg.h)
        .map(|&(_, _, n)| n)
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnnLayout {
    pub kernels: [Range<usize>; STAGES],
    pub biases: [Range<usize>; STAGES],
    pub hidden_weights: Range<usize>,
    pub hidden_bias: Range<usize>,
    pub output_weights: Range<usize>,
    pub output_bias: Range<usize>,
    pub total: usize,
}

impl CnnLayout {
    pub fn new(cfg: &TinyCnnConfig) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            let r = next..next + n;
            next += n;
            r
        };
        let ch = cfg.channels();
        let mut kernels: [Range<usize>; STAGES] = Default::default();
        let mut biases: [Range<usize>; STAGES] = Default::default();
        let mut cin = 1;
        for l in 0..STAGES {
            kernels[l] = take(9 * cin * ch[l]);
            biases[l] = take(ch[l]);
            cin = ch[l];
        }
        let hidden_weights = take(cfg.flatten_len() * cfg.h);
        let hidden_bias = take(cfg.h);
        let output_weights = take(cfg.h);
        let output_bias = take(1);
        Self {
            kernels,
            biases,
            hidden_weights,
            hidden_bias,
            output_weights,
            output_bias,
            total: next,
        }
    }

    /// Every block in storage order.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let mut v = Vec::new();
        for l in 0..STAGES {
            v.push(self.kernels[l].clone());
            v.push(self.biases[l].clone());
        }
        v.extend([
            self.hidden_weights.clone(),
            self.hidden_bias.clone(),
            self.output_weights.clone(),
            self.output_bias.clone(),
        ]);
        v
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input of each convolution.
    pub conv_inputs: Vec<Tensor>,
    /// Post-ReLU output of each convolution.
    pub activations: Vec<Tensor>,
    pub flat: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TinyCnn {
    cfg: TinyCnnConfig,
    layout: CnnLayout,
    params: Vec<f64>,
}

impl TinyCnn {
    pub fn zeros(cfg: TinyCnnConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = CnnLayout::new(&cfg);
        let params = vec![0.0; layout.total];
        Ok(Self { cfg, layout, params })
    }

    /// He-uniform weights, zero biases.
    pub fn init(cfg: TinyCnnConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(cfg)?;
        let mut rng = rng::stream(seed, rng::STREAM_INIT);
        let l = model.layout.clone();
        let mut cin = 1;
        for (s, &cout) in cfg.channels().iter().enumerate() {
            fill_uniform(&mut model.params[l.kernels[s].clone()], 9 * cin, &mut rng);
            cin = cout;
        }
        fill_uniform(&mut model.params[l.hidden_weights.clone()], cfg.flatten_len(), &mut rng);
        fill_uniform(&mut model.params[l.output_weights.clone()], cfg.h, &mut rng);
        Ok(model)
    }

    pub fn from_params(cfg: TinyCnnConfig, params: Vec<f64>) -> Result<Self> {
        let mut model = Self::zeros(cfg)?;
        if params.len() != model.params.len() {
            return Err(Error::LengthMismatch {
                what: "CNN parameters",
                expected: model.params.len(),
                actual: params.len(),
            });
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &TinyCnnConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &CnnLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn forward_cached(&self, img: &PaddedImage) -> ForwardCache {
        let l = &self.layout;
        let mut x = Tensor::from_image(img);
        let mut conv_inputs = Vec::with_capacity(STAGES);
        let mut activations = Vec::with_capacity(STAGES);
        for s in 0..STAGES {
            let mut a = conv2d_3x3(&x, &self.params[l.kernels[s].clone()], &self.params[l.biases[s].clone()])
                .expect("layout matches channel counts");
            relu_in_place(&mut a.data);
            let pooled = avg_pool_2x2(&a).expect("spatial size is a power of two");
            conv_inputs.push(x);
            activations.push(a);
            x = pooled;
        }
        let flat = x.into_data();
        let w1 = &self.params[l.hidden_weights.clone()];
        let b1 = &self.params[l.hidden_bias.clone()];
        let hidden: Vec<f64> = (0..self.cfg.h)
            .map(|j| {
                let row = &w1[j * flat.len()..][..flat.len()];
                (b1[j] + row.iter().zip(&flat).map(|(a, b)| a * b).sum::<f64>()).max(0.0)
            })
            .collect();
        let w2 = &self.params[l.output_weights.clone()];
        let output =
            self.params[l.output_bias.start] + w2.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
        ForwardCache {
            conv_inputs,
            activations,
            flat,
            hidden,
            output,
        }
    }

    pub fn forward(&self, img: &PaddedImage) -> f64 {
        self.forward_cached(img).output
    }

    /// Adds `coeff * d(output)/d(params)` into `grad`.
    pub fn backward_output(&self, cache: &ForwardCache, coeff: f64, grad: &mut [f64]) {
        let l = &self.layout;
        let (h, n) = (self.cfg.h, cache.flat.len());
        grad[l.output_bias.start] += coeff;
        let w2 = &self.params[l.output_weights.clone()];
        let mut d_hidden = vec![0.0; h];
        for j in 0..h {
            grad[l.output_weights.start + j] += coeff * cache.hidden[j];
            if cache.hidden[j] > 0.0 {
                d_hidden[j] = coeff * w2[j];
            }
        }
        let w1 = &self.params[l.hidden_weights.clone()];
        let mut d_flat = vec![0.0; n];
        for j in 0..h {
            let g = d_hidden[j];
            if g == 0.0 {
                continue;
            }
            grad[l.hidden_bias.start + j] += g;
            let row = l.hidden_weights.start + j * n;
            for i in 0..n {
                grad[row + i] += g * cache.flat[i];
                d_flat[i] += g * w1[j * n + i];
            }
        }
        let mut d_x = Tensor::from_vec(FINAL_SIDE, FINAL_SIDE, self.cfg.c4, d_flat).expect("flatten length");
        for s in (0..STAGES).rev() {
            let act = &cache.activations[s];
            let mut d_act = avg_pool_2x2_backward(&d_x);
            for (d, &a) in d_act.data.iter_mut().zip(&act.data) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            let (dk, rest) = grad[l.kernels[s].start..].split_at_mut(l.kernels[s].len());
            let db = &mut rest[..l.biases[s].len()];
            let d_in = conv2d_3x3_backward(
                &cache.conv_inputs[s],
                &self.params[l.kernels[s].clone()],
                &d_act,
                dk,
                db,
                s > 0,
            );
            if let Some(d_in) = d_in {
                d_x = d_in;
            }
        }
    }

    /// `((f - label)^2, gradient)`.
    pub fn loss_and_grad(&self, img: &PaddedImage, label: f64) -> (f64, f64, Vec<f64>) {
        let cache = self.forward_cached(img);
        let r = cache.output - label;
        let mut grad = vec![0.0; self.params.len()];
        self.backward_output(&cache, 2.0 * r, &mut grad);
        (cache.output, r * r, grad)
    }
}

fn fill_uniform(dst: &mut [f64], fan_in: usize, rng: &mut rng::Rng) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for w in dst {
        *w = rng.gen_range(-bound..bound);
    }
}

pub fn cnn_forward(model: &TinyCnn, img: &PaddedImage) -> f64 {
    model.forward(img)
}

/// Gradient of `(output - label)^2`.
pub fn cnn_backward(model: &TinyCnn, img: &PaddedImage, label: f64) -> Vec<f64> {
    model.loss_and_grad(img, label).2
}

pub fn evaluate_cnn<S: LabeledImage>(model: &TinyCnn, samples: &[&S]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let hits: Vec<bool> = samples
        .par_iter()
        .map(|s| Ok(sign_label(model.forward(&s.padded()?)) == s.label()))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
}

/// Square-loss Adam training from a seeded He initialisation.
pub fn train_cnn<S: LabeledImage>(
    train: &[&S],
    test: &[&S],
    cnn: TinyCnnConfig,
    cfg: &BaselineConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(TinyCnn, Metrics)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = TinyCnn::init(cnn, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, model.param_count());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng::stream(cfg.seed, rng::STREAM_EPOCH);
    let mut metrics = Metrics::default();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut correct, mut loss_sum) = (0usize, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let per_sample: Vec<(f64, f64, Vec<f64>)> = chunk
                .par_iter()
                .map(|&i| {
                    let s = train[i];
                    let (f, loss, g) = model.loss_and_grad(&s.padded()?, s.label());
                    Ok((f, loss, g))
                })
                .collect::<Result<_>>()?;
            let inv = 1.0 / chunk.len() as f64;
            let mut grad = vec![0.0; model.param_count()];
            for (&i, (f, loss, g)) in chunk.iter().zip(&per_sample) {
                loss_sum += loss;
                if sign_label(*f) == train[i].label() {
                    correct += 1;
                }
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b * inv;
                }
            }
            adam.step(model.params_mut(), &grad);
        }
        let record = EpochRecord {
            epoch,
            running_train_acc: correct as f64 / train.len() as f64,
            test_acc: if test.is_empty() {
                None
            } else {
                Some(evaluate_cnn(&model, test)?)
            },
            mean_loss: loss_sum / train.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        metrics.records.push(record);
    }
    metrics.final_train_accuracy = Some(evaluate_cnn(&model, train)?);
    Ok((model, metrics))
}
