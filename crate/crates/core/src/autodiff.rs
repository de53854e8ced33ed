//! Exact gradients of expert observables and of the mixture's square loss.
//!
//! Three routes are provided and cross-checked in the tests: adjoint
//! differentiation (one forward sweep plus one reverse sweep), the
//! parameter-shift rule (two circuit evaluations per angle) and central
//! finite differences.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{elementary_real_derivs, raw_output, ExpertCircuit, PARAMS_PER_GATE};
use crate::encoding::{encode_real, NUM_QUBITS};
use crate::error::{Error, Result};
use crate::moqe::{LabeledImage, MoqeModel};
use crate::state::{
    accumulate_pair_outer, apply_real_2q, apply_real_2q_transpose, expectation_z_all,
    weighted_z_diagonal, Amplitude, StateVector,
};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// One partial derivative per parameter, in parameter order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn max_abs_diff(&self, other: &GradientVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GradientVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for GradientVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradMethod {
    #[default]
    Adjoint,
    ParamShift,
    FiniteDiff,
}

impl fmt::Display for GradMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradMethod::Adjoint => "adjoint",
            GradMethod::ParamShift => "param-shift",
            GradMethod::FiniteDiff => "finite-diff",
        })
    }
}

impl FromStr for GradMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjoint" => Ok(GradMethod::Adjoint),
            "param-shift" => Ok(GradMethod::ParamShift),
            "finite-diff" => Ok(GradMethod::FiniteDiff),
            other => Err(Error::InvalidConfig(format!("unknown gradient method {other:?}"))),
        }
    }
}

/// Parameter-shift rule for a function whose every parameter enters through
/// a rotation `exp(-i t G)` with generator eigenvalues `±1/2`.
pub fn parameter_shift(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> GradientVector {
    let mut shifted = params.to_vec();
    GradientVector(
        (0..params.len())
            .map(|j| {
                shifted[j] = params[j] + FRAC_PI_2;
                let plus = f(&shifted);
                shifted[j] = params[j] - FRAC_PI_2;
                let minus = f(&shifted);
                shifted[j] = params[j];
                (plus - minus) / 2.0
            })
            .collect(),
    )
}

pub fn central_difference(
    params: &[f64],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradientVector {
    let mut shifted = params.to_vec();
    GradientVector(
        (0..params.len())
            .map(|j| {
                shifted[j] = params[j] + step;
                let plus = f(&shifted);
                shifted[j] = params[j] - step;
                let minus = f(&shifted);
                shifted[j] = params[j];
                (plus - minus) / (2.0 * step)
            })
            .collect(),
    )
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.len() != NUM_QUBITS {
        return Err(Error::LengthMismatch {
            what: "observable weights",
            expected: NUM_QUBITS,
            actual: weights.len(),
        });
    }
    Ok(())
}

fn weighted_value<T: Amplitude>(
    circuit: &ExpertCircuit,
    params: &[f64],
    input: &[T],
    weights: &[f64],
) -> Result<f64> {
    let mut amps = input.to_vec();
    circuit.apply(params, &mut amps)?;
    let z = expectation_z_all(&amps, NUM_QUBITS);
    Ok(weights.iter().zip(&z).map(|(w, z)| w * z).sum())
}

/// `<sum_q w_q Z_q>` and its gradient by the parameter-shift rule.
pub fn grad_parameter_shift_weighted<T: Amplitude>(
    circuit: &ExpertCircuit,
    params: &[f64],
    input: &[T],
    weights: &[f64],
) -> Result<(f64, GradientVector)> {
    check_weights(weights)?;
    let value = weighted_value(circuit, params, input, weights)?;
    let grad = parameter_shift(params, |p| {
        weighted_value(circuit, p, input, weights).expect("length checked")
    });
    Ok((value, grad))
}

/// Gradient of `<Z_qubit>` by the parameter-shift rule.
///
/// Every parametrized rotation in an [`ExpertCircuit`] is an `Ry`, so the
/// two-term shift rule is exact for all of its parameters.
pub fn grad_parameter_shift(
    circuit: &ExpertCircuit,
    params: &[f64],
    input: &StateVector,
    qubit: usize,
) -> Result<GradientVector> {
    if qubit >= NUM_QUBITS {
        return Err(Error::QubitOutOfRange {
            index: qubit,
            num_qubits: NUM_QUBITS,
        });
    }
    let mut weights = [0.0; NUM_QUBITS];
    weights[qubit] = 1.0;
    Ok(grad_parameter_shift_weighted(circuit, params, input.amplitudes(), &weights)?.1)
}

pub fn grad_finite_difference_weighted<T: Amplitude>(
    circuit: &ExpertCircuit,
    params: &[f64],
    input: &[T],
    weights: &[f64],
    step: f64,
) -> Result<(f64, GradientVector)> {
    check_weights(weights)?;
    let value = weighted_value(circuit, params, input, weights)?;
    let grad = central_difference(params, step, |p| {
        weighted_value(circuit, p, input, weights).expect("length checked")
    });
    Ok((value, grad))
}

/// `<sum_q w_q Z_q>` and its exact gradient by adjoint differentiation.
///
/// Forward sweep to the output state, then a reverse sweep that un-applies
/// each gate from both the state and the co-state `O|psi>`; the local
/// derivative of gate `k` contracts against the pair outer product at that
/// point.
pub fn adjoint_weighted<T: Amplitude>(
    circuit: &ExpertCircuit,
    params: &[f64],
    input: &[T],
    weights: &[f64],
) -> Result<(f64, GradientVector)> {
    check_weights(weights)?;
    let mats = circuit.gate_matrices(params)?;
    let pairs: Vec<(usize, usize)> = circuit.pairs().collect();
    if input.len() != 1 << NUM_QUBITS {
        return Err(Error::LengthMismatch {
            what: "amplitudes",
            expected: 1 << NUM_QUBITS,
            actual: input.len(),
        });
    }

    let mut psi = input.to_vec();
    for (&(a, b), m) in pairs.iter().zip(&mats) {
        apply_real_2q(&mut psi, NUM_QUBITS, a, b, m);
    }
    let diag = weighted_z_diagonal(weights);
    let value = psi.iter().zip(&diag).map(|(p, d)| p.norm_sqr() * d).sum();
    let mut lambda: Vec<T> = psi.iter().zip(&diag).map(|(&p, &d)| p * d).collect();

    let mut grad = vec![0.0; params.len()];
    for k in (0..mats.len()).rev() {
        let (a, b) = pairs[k];
        apply_real_2q_transpose(&mut psi, NUM_QUBITS, a, b, &mats[k]);
        let outer = accumulate_pair_outer(&lambda, &psi, NUM_QUBITS, a, b);
        let t = &params[k * PARAMS_PER_GATE..(k + 1) * PARAMS_PER_GATE];
        let derivs = elementary_real_derivs(&[t[0], t[1], t[2], t[3]]);
        for (p, d) in derivs.iter().enumerate() {
            let mut s = 0.0;
            for r in 0..4 {
                for c in 0..4 {
                    s += d[r][c] * outer[r][c];
                }
            }
            grad[k * PARAMS_PER_GATE + p] = 2.0 * s;
        }
        apply_real_2q_transpose(&mut lambda, NUM_QUBITS, a, b, &mats[k]);
    }
    Ok((value, GradientVector(grad)))
}

pub fn grad_adjoint(
    circuit: &ExpertCircuit,
    params: &[f64],
    input: &StateVector,
    weights: &[f64],
) -> Result<GradientVector> {
    Ok(adjoint_weighted(circuit, params, input.amplitudes(), weights)?.1)
}

/// Raw summed-Z output of one expert and its gradient.
pub fn raw_output_and_grad(
    circuit: &ExpertCircuit,
    params: &[f64],
    input: &[f64],
    method: GradMethod,
) -> Result<(f64, GradientVector)> {
    let ones = [1.0; NUM_QUBITS];
    match method {
        GradMethod::Adjoint => adjoint_weighted(circuit, params, input, &ones),
        GradMethod::ParamShift => grad_parameter_shift_weighted(circuit, params, input, &ones),
        GradMethod::FiniteDiff => {
            grad_finite_difference_weighted(circuit, params, input, &ones, DEFAULT_FD_STEP)
        }
    }
}

/// Loss, joint gradient over every expert, and the model outputs of a batch.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub loss: f64,
    pub gradient: GradientVector,
    pub outputs: Vec<f64>,
}

/// Mean square loss `(f - l)^2` over the batch and its gradient against all
/// experts' parameters at once. Expert `e` receives
/// `2 (f - l) / (nu sqrt(n)) * d raw_e`, so experts couple only through the
/// shared residual.
pub fn loss_and_grad_batch<S: LabeledImage>(
    model: &MoqeModel,
    batch: &[&S],
    method: GradMethod,
) -> Result<BatchGradient> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let scale = model.output_scale()?;
    let n = model.num_experts();
    let per_expert = model.circuit().param_count();

    let inputs: Vec<Vec<f64>> = batch
        .par_iter()
        .map(|s| s.padded().map(|img| encode_real(&img)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..batch.len())
        .flat_map(|i| (0..n).map(move |e| (i, e)))
        .collect();
    let partials: Vec<(f64, GradientVector)> = jobs
        .par_iter()
        .map(|&(i, e)| raw_output_and_grad(model.circuit(), model.expert(e), &inputs[i], method))
        .collect::<Result<_>>()?;

    let mut gradient = GradientVector::zeros(n * per_expert);
    let mut loss = 0.0;
    let mut outputs = Vec::with_capacity(batch.len());
    let inv_batch = 1.0 / batch.len() as f64;
    for (i, sample) in batch.iter().enumerate() {
        let results = &partials[i * n..(i + 1) * n];
        let f = results.iter().map(|(raw, _)| raw).sum::<f64>() * scale;
        let residual = f - sample.label();
        loss += residual * residual * inv_batch;
        outputs.push(f);
        let coeff = 2.0 * residual * scale * inv_batch;
        for (e, (_, g)) in results.iter().enumerate() {
            let dst = &mut gradient[e * per_expert..(e + 1) * per_expert];
            for (d, gi) in dst.iter_mut().zip(g.iter()) {
                *d += coeff * gi;
            }
        }
    }
    Ok(BatchGradient {
        loss,
        gradient,
        outputs,
    })
}

/// Batch loss with the joint parameter vector replaced by `flat_params`.
pub fn batch_loss<S: LabeledImage>(model: &MoqeModel, flat_params: &[f64], batch: &[&S]) -> Result<f64> {
    let mut m = model.clone();
    m.set_flat_params(flat_params)?;
    let mut loss = 0.0;
    for s in batch {
        let r = m.output(&s.padded()?)? - s.label();
        loss += r * r;
    }
    Ok(loss / batch.len() as f64)
}

/// Sum of `<Z_q>` computed on the complex simulator path; used by tests as
/// an independent forward model.
pub fn raw_output_complex(circuit: &ExpertCircuit, params: &[f64], input: &StateVector) -> Result<f64> {
    Ok(raw_output(&crate::ansatz::run_expert(circuit, params, input)?))
}
