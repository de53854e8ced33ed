use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, sign_label, LabeledImage, MoqeModel, DEFAULT_CALIBRATION_SIZE};
use crate::autodiff::{loss_and_grad_batch, GradMethod};
use crate::error::{Error, Result};
use crate::metrics::{EpochRecord, Metrics};
use crate::mnist::{DatasetSplit, MnistDataset, RawSample};
use crate::optim::{Adam, AdamConfig};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub seed: u64,
    pub train_subset_size: usize,
    pub gradient_method: GradMethod,
    /// Skip the final full pass over the training selection.
    #[serde(default)]
    pub skip_final_train_eval: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            epochs: 1,
            adam: AdamConfig::default(),
            seed: 0,
            train_subset_size: 50_000,
            gradient_method: GradMethod::Adjoint,
            skip_final_train_eval: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("need at least one epoch".into()));
        }
        if self.train_subset_size < 1 {
            return Err(Error::InvalidConfig("training subset is empty".into()));
        }
        self.adam.validate()
    }
}

/// Calibration images: the head of the training selection.
pub fn calibration_sample<'a, S>(train: &[&'a S]) -> Vec<&'a S> {
    train.iter().take(DEFAULT_CALIBRATION_SIZE).copied().collect()
}

/// Trains every expert jointly on the global output.
///
/// Each epoch reshuffles `train`, walks it in batches of `cfg.batch_size`
/// (the last batch may be short) and takes one Adam step over the
/// concatenated parameter vector per batch. The running accuracy counts
/// predictions made before each step; test accuracy uses the parameters at
/// epoch end. `on_epoch` sees every record as it is produced.
pub fn train<S: LabeledImage>(
    model: &mut MoqeModel,
    train: &[&S],
    test: &[&S],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Metrics> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    model.output_scale()?;

    let mut adam = Adam::new(cfg.adam, model.total_params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = rng::stream(cfg.seed, rng::STREAM_EPOCH);
    let mut metrics = Metrics::default();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut correct = 0usize;
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&S> = chunk.iter().map(|&i| train[i]).collect();
            let bg = loss_and_grad_batch(model, &batch, cfg.gradient_method)?;
            correct += bg
                .outputs
                .iter()
                .zip(&batch)
                .filter(|(f, s)| sign_label(**f) == s.label())
                .count();
            loss_sum += bg.loss * batch.len() as f64;
            adam.step(model.flat_params_mut(), &bg.gradient);
        }
        let test_acc = if test.is_empty() {
            None
        } else {
            Some(evaluate(model, test)?)
        };
        let record = EpochRecord {
            epoch,
            running_train_acc: correct as f64 / train.len() as f64,
            test_acc,
            mean_loss: loss_sum / train.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        metrics.records.push(record);
    }
    if !cfg.skip_final_train_eval {
        metrics.final_train_accuracy = Some(evaluate(model, train)?);
    }
    Ok(metrics)
}

/// Selects the first `cfg.train_subset_size` images of the split, then trains.
pub fn train_on_split(
    model: &mut MoqeModel,
    data: &MnistDataset,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<Metrics> {
    let train_set: Vec<&RawSample> = split
        .train_subset(cfg.train_subset_size)
        .iter()
        .map(|&i| &data.train[i])
        .collect();
    let test_set: Vec<&RawSample> = split.test.iter().map(|&i| &data.test[i]).collect();
    train(model, &train_set, &test_set, cfg, on_epoch)
}
