//! Mixture of quantum experts: an unweighted, normalized sum of expert
//! circuits sharing one input state.

mod checkpoint;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use train::{calibration_sample, train, train_on_split, TrainConfig};

use std::fmt::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::ansatz::{raw_output, ExpertCircuit};
use crate::encoding::{encode_real, pad_image, PaddedImage};
use crate::error::{Error, Result};
use crate::mnist::RawSample;
use crate::rng;

pub const DEFAULT_INIT_RANGE: f64 = 0.1;
pub const DEFAULT_CALIBRATION_SIZE: usize = 1024;

/// Anything that can be turned into a padded image with a ±1 label.
pub trait LabeledImage: Sync {
    fn padded(&self) -> Result<PaddedImage>;
    fn label(&self) -> f64;
}

impl LabeledImage for RawSample {
    fn padded(&self) -> Result<PaddedImage> {
        pad_image(&self.pixels)
    }
    fn label(&self) -> f64 {
        RawSample::label(self)
    }
}

impl LabeledImage for (PaddedImage, f64) {
    fn padded(&self) -> Result<PaddedImage> {
        Ok(self.0.clone())
    }
    fn label(&self) -> f64 {
        self.1
    }
}

/// `+1` for `f >= 0`, else `-1`.
pub fn sign_label(f: f64) -> f64 {
    if f >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoqeModel {
    circuit: ExpertCircuit,
    num_experts: usize,
    /// Expert-major concatenation of all parameter vectors.
    params: Vec<f64>,
    nu: Option<f64>,
    seed: u64,
}

/// `n` experts of the default 252-parameter circuit.
pub fn init_model(n: usize, seed: u64) -> Result<MoqeModel> {
    MoqeModel::init(ExpertCircuit::default(), n, seed, DEFAULT_INIT_RANGE)
}

impl MoqeModel {
    /// Angles drawn i.i.d. uniform in `[-init_range, init_range]`.
    pub fn init(circuit: ExpertCircuit, n: usize, seed: u64, init_range: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        if !(init_range >= 0.0 && init_range.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad init range {init_range}")));
        }
        let mut rng = rng::stream(seed, rng::STREAM_INIT);
        let params = (0..n * circuit.param_count())
            .map(|_| {
                if init_range == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-init_range..=init_range)
                }
            })
            .collect();
        Ok(Self {
            circuit,
            num_experts: n,
            params,
            nu: None,
            seed,
        })
    }

    pub fn from_parts(
        circuit: ExpertCircuit,
        experts: Vec<Vec<f64>>,
        nu: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::InvalidConfig("need at least one expert".into()));
        }
        for e in &experts {
            circuit.check_params(e)?;
        }
        if let Some(nu) = nu {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::InvalidConfig(format!("normalizer {nu} must be positive")));
            }
        }
        Ok(Self {
            circuit,
            num_experts: experts.len(),
            params: experts.concat(),
            nu,
            seed,
        })
    }

    pub fn circuit(&self) -> &ExpertCircuit {
        &self.circuit
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    pub fn is_calibrated(&self) -> bool {
        self.nu.is_some()
    }

    pub fn total_params(&self) -> usize {
        self.params.len()
    }

    pub fn expert(&self, e: usize) -> &[f64] {
        let p = self.circuit.param_count();
        &self.params[e * p..(e + 1) * p]
    }

    pub fn experts(&self) -> impl Iterator<Item = &[f64]> {
        self.params.chunks_exact(self.circuit.param_count())
    }

    pub fn flat_params(&self) -> &[f64] {
        &self.params
    }

    pub fn flat_params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                what: "model parameters",
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Overrides the normalizer; tests and checkpoint restore only.
    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("normalizer {nu} must be positive")));
        }
        self.nu = Some(nu);
        Ok(self)
    }

    /// `1 / (nu sqrt(n))`.
    pub fn output_scale(&self) -> Result<f64> {
        let nu = self.nu.ok_or(Error::Uncalibrated)?;
        Ok(1.0 / (nu * (self.num_experts as f64).sqrt()))
    }

    /// Summed-Z output of every expert on pre-encoded amplitudes.
    pub fn raw_outputs(&self, amps: &[f64]) -> Result<Vec<f64>> {
        self.experts()
            .map(|p| Ok(raw_output(&self.circuit.z_values_real(p, amps)?)))
            .collect()
    }

    pub fn output_encoded(&self, amps: &[f64]) -> Result<f64> {
        let scale = self.output_scale()?;
        Ok(self.raw_outputs(amps)?.iter().sum::<f64>() * scale)
    }

    /// `f = sum_e raw_e / (nu sqrt(n))`.
    pub fn output(&self, img: &PaddedImage) -> Result<f64> {
        self.output_encoded(&encode_real(img))
    }

    pub fn predict(&self, img: &PaddedImage) -> Result<f64> {
        Ok(sign_label(self.output(img)?))
    }

    /// Fixes `nu` as the population standard deviation of single-expert raw
    /// outputs over `sample`, averaged over experts.
    pub fn calibrate_normalizer<S: LabeledImage>(&mut self, sample: &[&S]) -> Result<()> {
        if sample.is_empty() {
            return Err(Error::Empty("calibration sample"));
        }
        if self.nu.is_some() {
            return Err(Error::InvalidConfig("normalizer already calibrated".into()));
        }
        let raws: Vec<Vec<f64>> = sample
            .par_iter()
            .map(|s| self.raw_outputs(&encode_real(&s.padded()?)))
            .collect::<Result<_>>()?;
        let per_expert: Vec<Vec<f64>> = (0..self.num_experts)
            .map(|e| raws.iter().map(|r| r[e]).collect())
            .collect();
        self.nu = Some(normalizer_from_raw(&per_expert)?);
        Ok(())
    }

    /// Model outputs for every sample, in order.
    pub fn outputs<S: LabeledImage>(&self, samples: &[&S]) -> Result<Vec<f64>> {
        self.output_scale()?;
        samples
            .par_iter()
            .map(|s| self.output(&s.padded()?))
            .collect()
    }
}

pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Mean over experts of each expert's raw-output standard deviation.
pub fn normalizer_from_raw(per_expert: &[Vec<f64>]) -> Result<f64> {
    if per_expert.is_empty() || per_expert.iter().any(|v| v.is_empty()) {
        return Err(Error::Empty("calibration sample"));
    }
    let nu = per_expert.iter().map(|v| population_std(v)).sum::<f64>() / per_expert.len() as f64;
    if nu.is_nan() || nu <= 1e-12 {
        return Err(Error::ZeroVariance);
    }
    Ok(nu)
}

pub fn evaluate<S: LabeledImage>(model: &MoqeModel, samples: &[&S]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let outputs = model.outputs(samples)?;
    let correct = outputs
        .iter()
        .zip(samples)
        .filter(|(f, s)| sign_label(**f) == s.label())
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

pub const HISTOGRAM_LO: f64 = -3.0;
pub const HISTOGRAM_HI: f64 = 3.0;
pub const HISTOGRAM_BINS: usize = 60;

/// Counts of model outputs on `[-3, 3]` in 60 bins, split by true label.
/// Values outside the range land in the edge bins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputHistogram {
    pub odd: Vec<usize>,
    pub even: Vec<usize>,
}

impl OutputHistogram {
    pub fn from_outputs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut h = Self {
            odd: vec![0; HISTOGRAM_BINS],
            even: vec![0; HISTOGRAM_BINS],
        };
        for (f, label) in pairs {
            let width = (HISTOGRAM_HI - HISTOGRAM_LO) / HISTOGRAM_BINS as f64;
            let bin = ((f - HISTOGRAM_LO) / width).floor().clamp(0.0, (HISTOGRAM_BINS - 1) as f64);
            let bins = if label > 0.0 { &mut h.odd } else { &mut h.even };
            bins[bin as usize] += 1;
        }
        h
    }

    pub fn bin_edges(bin: usize) -> (f64, f64) {
        let width = (HISTOGRAM_HI - HISTOGRAM_LO) / HISTOGRAM_BINS as f64;
        (
            HISTOGRAM_LO + bin as f64 * width,
            HISTOGRAM_LO + (bin + 1) as f64 * width,
        )
    }

    pub fn total(&self) -> usize {
        self.odd.iter().sum::<usize>() + self.even.iter().sum::<usize>()
    }

    /// Count-weighted mean of bin centres.
    pub fn mean(counts: &[usize]) -> Option<f64> {
        let total: usize = counts.iter().sum();
        (total > 0).then(|| {
            counts
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let (lo, hi) = Self::bin_edges(i);
                    c as f64 * (lo + hi) / 2.0
                })
                .sum::<f64>()
                / total as f64
        })
    }

    /// `bin_lo,bin_hi,odd,even`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,odd,even\n");
        for i in 0..HISTOGRAM_BINS {
            let (lo, hi) = Self::bin_edges(i);
            writeln!(out, "{lo:.2},{hi:.2},{},{}", self.odd[i], self.even[i]).unwrap();
        }
        out
    }
}

pub fn output_histogram<S: LabeledImage>(model: &MoqeModel, samples: &[&S]) -> Result<OutputHistogram> {
    let outputs = model.outputs(samples)?;
    Ok(OutputHistogram::from_outputs(
        outputs.into_iter().zip(samples.iter().map(|s| s.label())),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(3, 11).unwrap();
        let b = init_model(3, 11).unwrap();
        let c = init_model(3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.flat_params(), c.flat_params());
        assert!(a.flat_params().iter().all(|p| p.abs() <= 0.1));
        assert!(!a.is_calibrated());
        assert_eq!(init_model(16, 0).unwrap().total_params(), 4032);
        assert!(init_model(0, 0).is_err());
    }

    #[test]
    fn unit_variance_sample() {
        let v = vec![vec![1.0, -1.0, 1.0, -1.0]];
        assert_eq!(normalizer_from_raw(&v).unwrap(), 1.0);
        assert!(matches!(
            normalizer_from_raw(&[vec![0.3; 5]]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sign_label(0.3), 1.0);
        assert_eq!(sign_label(-0.3), -1.0);
        assert_eq!(sign_label(0.0), 1.0);
    }

    #[test]
    fn uncalibrated_output_fails() {
        let m = init_model(1, 0).unwrap();
        let img = PaddedImage::from_grid([[0.25; 32]; 32]).unwrap();
        assert!(matches!(m.output(&img), Err(Error::Uncalibrated)));
        assert!(evaluate::<(PaddedImage, f64)>(&m, &[]).is_err());
    }

    #[test]
    fn histogram_conserves_counts() {
        let pairs = [(-5.0, 1.0), (5.0, -1.0), (0.0, 1.0), (2.95, 1.0), (-0.01, -1.0)];
        let h = OutputHistogram::from_outputs(pairs);
        assert_eq!(h.total(), 5);
        assert_eq!(h.odd[0], 1);
        assert_eq!(h.even[59], 1);
        assert_eq!(h.odd[30], 1);
        assert_eq!(h.odd[59], 1);
        assert_eq!(h.even[29], 1);
        assert_eq!(h.to_csv().lines().count(), 61);
    }
}
