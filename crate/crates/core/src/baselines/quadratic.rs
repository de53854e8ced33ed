//! Full quadratic form over the 784 raw pixel intensities.

use std::time::Instant;

use rand::seq::SliceRandom;

use super::BaselineConfig;
use crate::error::{Error, Result};
use crate::metrics::{EpochRecord, Metrics};
use crate::mnist::PIXELS;
use crate::moqe::{sign_label, LabeledImage};
use crate::optim::Adam;
use crate::rng;

/// Upper triangle of a 784x784 symmetric form, diagonal included.
pub const QUADRATIC_TERMS: usize = PIXELS * (PIXELS + 1) / 2;
pub const QUADRATIC_PARAMS: usize = 1 + PIXELS + QUADRATIC_TERMS;

const LINEAR_OFFSET: usize = 1;
const QUAD_OFFSET: usize = 1 + PIXELS;

/// Row-major position of `(i, j)`, `i <= j`, in the packed upper triangle.
#[inline]
pub fn triangle_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < PIXELS);
    // rows 0..i hold PIXELS, PIXELS-1, ... entries
    i * PIXELS - i * i.saturating_sub(1) / 2 + (j - i)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticClassifier {
    /// `[bias, linear(784), quadratic(307,720)]`.
    params: Vec<f64>,
}

impl Default for QuadraticClassifier {
    fn default() -> Self {
        Self::zeros()
    }
}

impl QuadraticClassifier {
    pub fn zeros() -> Self {
        Self {
            params: vec![0.0; QUADRATIC_PARAMS],
        }
    }

    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        if params.len() != QUADRATIC_PARAMS {
            return Err(Error::LengthMismatch {
                what: "quadratic classifier parameters",
                expected: QUADRATIC_PARAMS,
                actual: params.len(),
            });
        }
        Ok(Self { params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn bias(&self) -> f64 {
        self.params[0]
    }

    pub fn linear(&self) -> &[f64] {
        &self.params[LINEAR_OFFSET..QUAD_OFFSET]
    }

    pub fn quadratic(&self) -> &[f64] {
        &self.params[QUAD_OFFSET..]
    }

    /// `bias + sum_i w_i p_i + sum_{i<=j} q_ij p_i p_j`, visiting only
    /// nonzero pixels in ascending `(i, j)` order.
    pub fn output(&self, pixels: &[f64; PIXELS]) -> f64 {
        let nz: Vec<usize> = (0..PIXELS).filter(|&i| pixels[i] != 0.0).collect();
        let lin = self.linear();
        let quad = self.quadratic();
        let mut f = self.bias();
        for &i in &nz {
            f += lin[i] * pixels[i];
        }
        for (a, &i) in nz.iter().enumerate() {
            let row = triangle_index(i, i);
            let mut acc = 0.0;
            for &j in &nz[a..] {
                acc += quad[row + (j - i)] * pixels[j];
            }
            f += pixels[i] * acc;
        }
        f
    }

    /// Adds `coeff * df/dparams` into `grad`.
    pub fn accumulate_gradient(&self, pixels: &[f64; PIXELS], coeff: f64, grad: &mut [f64]) {
        let nz: Vec<usize> = (0..PIXELS).filter(|&i| pixels[i] != 0.0).collect();
        grad[0] += coeff;
        for &i in &nz {
            grad[LINEAR_OFFSET + i] += coeff * pixels[i];
        }
        let quad = &mut grad[QUAD_OFFSET..];
        for (a, &i) in nz.iter().enumerate() {
            let row = triangle_index(i, i);
            let ci = coeff * pixels[i];
            for &j in &nz[a..] {
                quad[row + (j - i)] += ci * pixels[j];
            }
        }
    }

    pub fn predict(&self, pixels: &[f64; PIXELS]) -> f64 {
        sign_label(self.output(pixels))
    }
}

pub fn quad_output(model: &QuadraticClassifier, pixels: &[f64; PIXELS]) -> f64 {
    model.output(pixels)
}

fn pixels_of<S: LabeledImage>(s: &S) -> Result<[f64; PIXELS]> {
    Ok(s.padded()?.interior())
}

pub fn evaluate_quadratic<S: LabeledImage>(model: &QuadraticClassifier, samples: &[&S]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut correct = 0;
    for s in samples {
        if model.predict(&pixels_of(*s)?) == s.label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Square-loss training from zero parameters with Adam, mean loss per batch.
pub fn train_quadratic<S: LabeledImage>(
    train: &[&S],
    test: &[&S],
    cfg: &BaselineConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(QuadraticClassifier, Metrics)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut model = QuadraticClassifier::zeros();
    let mut adam = Adam::new(cfg.adam, QUADRATIC_PARAMS);
    let mut grad = vec![0.0; QUADRATIC_PARAMS];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng::stream(cfg.seed, rng::STREAM_EPOCH);
    let mut metrics = Metrics::default();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let (mut correct, mut loss_sum) = (0usize, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let pixels = pixels_of(train[i])?;
                let label = train[i].label();
                let f = model.output(&pixels);
                let r = f - label;
                loss_sum += r * r;
                if sign_label(f) == label {
                    correct += 1;
                }
                model.accumulate_gradient(&pixels, 2.0 * r * inv, &mut grad);
            }
            adam.step(&mut model.params, &grad);
        }
        let record = EpochRecord {
            epoch,
            running_train_acc: correct as f64 / train.len() as f64,
            test_acc: if test.is_empty() {
                None
            } else {
                Some(evaluate_quadratic(&model, test)?)
            },
            mean_loss: loss_sum / train.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        metrics.records.push(record);
    }
    metrics.final_train_accuracy = Some(evaluate_quadratic(&model, train)?);
    Ok((model, metrics))
}
