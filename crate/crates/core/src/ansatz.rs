//! The 4-parameter two-qubit block, ladder layers and the layered expert circuit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::{x_qubit, y_qubit, NUM_QUBITS};
use crate::error::{Error, Result};
use crate::oracle::PlacedGate;
use crate::state::{
    apply_real_2q, check_pair, expectation_z_all, ry_real, Amplitude, RealGate4, StateVector,
    Unitary4, CNOT,
};

pub const PARAMS_PER_GATE: usize = 4;
pub const DEFAULT_LAYERS: usize = 3;

fn kron2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> RealGate4 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i >> 1][j >> 1] * b[i & 1][j & 1]))
}

fn matmul4(a: &RealGate4, b: &RealGate4) -> RealGate4 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..4).map(|k| a[i][k] * b[k][j]).sum()))
}

/// d/dθ of `ry_real(θ)`.
fn ry_real_deriv(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[-0.5 * s, -0.5 * c], [0.5 * c, -0.5 * s]]
}

/// `[Ry(t3) ⊗ Ry(t4)] · CNOT · [Ry(t1) ⊗ Ry(t2)]`, first factor on the
/// control (more significant) qubit.
pub fn elementary_real(theta: &[f64; 4]) -> RealGate4 {
    let pre = kron2(&ry_real(theta[0]), &ry_real(theta[1]));
    let post = kron2(&ry_real(theta[2]), &ry_real(theta[3]));
    matmul4(&post, &matmul4(&CNOT, &pre))
}

/// Partial derivatives of [`elementary_real`] in each of the four angles.
pub fn elementary_real_derivs(theta: &[f64; 4]) -> [RealGate4; 4] {
    let r: [[[f64; 2]; 2]; 4] = std::array::from_fn(|k| ry_real(theta[k]));
    let d: [[[f64; 2]; 2]; 4] = std::array::from_fn(|k| ry_real_deriv(theta[k]));
    let pre = kron2(&r[0], &r[1]);
    let post = kron2(&r[2], &r[3]);
    [
        matmul4(&post, &matmul4(&CNOT, &kron2(&d[0], &r[1]))),
        matmul4(&post, &matmul4(&CNOT, &kron2(&r[0], &d[1]))),
        matmul4(&kron2(&d[2], &r[3]), &matmul4(&CNOT, &pre)),
        matmul4(&kron2(&r[2], &d[3]), &matmul4(&CNOT, &pre)),
    ]
}

pub fn elementary_unitary(theta: &[f64; 4]) -> Unitary4 {
    Unitary4::from_real(elementary_real(theta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementaryGate {
    pub pair: (usize, usize),
    pub theta: [f64; 4],
}

impl ElementaryGate {
    pub fn new(pair: (usize, usize), theta: [f64; 4]) -> Result<Self> {
        check_pair(pair.0, pair.1, NUM_QUBITS)?;
        Ok(Self { pair, theta })
    }

    pub fn placed(&self) -> PlacedGate {
        PlacedGate::Two {
            a: self.pair.0,
            b: self.pair.1,
            u: elementary_unitary(&self.theta),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleName {
    Ladder21,
    Ladder13,
}

impl fmt::Display for ScheduleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleName::Ladder21 => "ladder21",
            ScheduleName::Ladder13 => "ladder13",
        })
    }
}

impl FromStr for ScheduleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ladder21" => Ok(ScheduleName::Ladder21),
            "ladder13" => Ok(ScheduleName::Ladder13),
            other => Err(Error::UnknownSchedule(other.to_string())),
        }
    }
}

/// Allowed coupling families between coordinate qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairKind {
    /// `(x_i, y_i)`
    Rung,
    /// `(x_i, x_{i+1})`
    XRail,
    /// `(y_i, y_{i+1})`
    YRail,
}

/// Classifies a qubit pair, in either orientation.
pub fn pair_kind(a: usize, b: usize) -> Option<PairKind> {
    let (lo, hi) = (a.min(b), a.max(b));
    if hi >= NUM_QUBITS {
        return None;
    }
    match (lo % 2, hi - lo) {
        (0, 1) => Some(PairKind::Rung),
        (0, 2) => Some(PairKind::XRail),
        (1, 2) => Some(PairKind::YRail),
        _ => None,
    }
}

/// Distance when qubits sit on a line `x0, y0, x1, y1, ..., x4, y4`.
pub fn line_distance(a: usize, b: usize) -> usize {
    a.abs_diff(b)
}

/// Grid coordinates `(row, column)` on the 2x5 layout: x qubits on row 0,
/// y qubits on row 1.
pub fn grid_position(q: usize) -> (usize, usize) {
    (q % 2, q / 2)
}

pub fn grid_adjacent(a: usize, b: usize) -> bool {
    let (ra, ca) = grid_position(a);
    let (rb, cb) = grid_position(b);
    ra.abs_diff(rb) + ca.abs_diff(cb) == 1
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateSchedule {
    name: ScheduleName,
    reversed: bool,
    placements: Vec<(usize, usize)>,
}

impl GateSchedule {
    /// Builds the named schedule climbing from the coarsest bits (`i = 0`)
    /// to the finest, or the mirror image when `reversed`.
    pub fn new(name: ScheduleName, reversed: bool) -> Self {
        let level = |i: usize| if reversed { 4 - i } else { i };
        let x = |i: usize| x_qubit(level(i));
        let y = |i: usize| y_qubit(level(i));
        let mut placements = vec![(x(0), y(0))];
        for i in 0..4 {
            match name {
                ScheduleName::Ladder21 => placements.extend([
                    (x(i), x(i + 1)),
                    (y(i), y(i + 1)),
                    (x(i + 1), y(i + 1)),
                    (x(i), x(i + 1)),
                    (y(i), y(i + 1)),
                ]),
                ScheduleName::Ladder13 => {
                    placements.extend([(x(i), x(i + 1)), (y(i), y(i + 1)), (x(i + 1), y(i + 1))])
                }
            }
        }
        Self {
            name,
            reversed,
            placements,
        }
    }

    pub fn name(&self) -> ScheduleName {
        self.name
    }

    pub fn reversed(&self) -> bool {
        self.reversed
    }

    pub fn placements(&self) -> &[(usize, usize)] {
        &self.placements
    }
}

pub fn build_schedule(name: &str) -> Result<GateSchedule> {
    Ok(GateSchedule::new(name.parse()?, false))
}

/// One expert: `num_layers` independent copies of a schedule's layer.
///
/// Parameters are laid out layer-major, then placement, then the four
/// angles `(t1, t2, t3, t4)` of each block.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertCircuit {
    schedule: GateSchedule,
    num_layers: usize,
}

impl ExpertCircuit {
    pub fn new(schedule: GateSchedule, num_layers: usize) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::InvalidConfig("an expert needs at least one layer".into()));
        }
        Ok(Self {
            schedule,
            num_layers,
        })
    }

    pub fn schedule(&self) -> &GateSchedule {
        &self.schedule
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_gates(&self) -> usize {
        self.schedule.placements.len() * self.num_layers
    }

    pub fn param_count(&self) -> usize {
        PARAMS_PER_GATE * self.num_gates()
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "expert parameters",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        Ok(())
    }

    /// Gate pairs in application order, one entry per 4-parameter block.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_layers).flat_map(move |_| self.schedule.placements.iter().copied())
    }

    pub fn gates(&self, params: &[f64]) -> Result<Vec<ElementaryGate>> {
        self.check_params(params)?;
        self.pairs()
            .zip(params.chunks_exact(PARAMS_PER_GATE))
            .map(|(pair, t)| ElementaryGate::new(pair, [t[0], t[1], t[2], t[3]]))
            .collect()
    }

    pub fn placed_gates(&self, params: &[f64]) -> Result<Vec<PlacedGate>> {
        Ok(self.gates(params)?.iter().map(ElementaryGate::placed).collect())
    }

    /// Real gate matrices for every block, in application order.
    pub fn gate_matrices(&self, params: &[f64]) -> Result<Vec<RealGate4>> {
        self.check_params(params)?;
        Ok(params
            .chunks_exact(PARAMS_PER_GATE)
            .map(|t| elementary_real(&[t[0], t[1], t[2], t[3]]))
            .collect())
    }

    /// Applies the whole circuit to raw 10-qubit amplitudes in place.
    pub fn apply<T: Amplitude>(&self, params: &[f64], amps: &mut [T]) -> Result<()> {
        if amps.len() != 1 << NUM_QUBITS {
            return Err(Error::LengthMismatch {
                what: "amplitudes",
                expected: 1 << NUM_QUBITS,
                actual: amps.len(),
            });
        }
        let mats = self.gate_matrices(params)?;
        for ((a, b), m) in self.pairs().zip(&mats) {
            apply_real_2q(amps, NUM_QUBITS, a, b, m);
        }
        Ok(())
    }

    /// `<Z_q>` for `q = 0..10` after running on real amplitudes.
    pub fn z_values_real(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        let mut amps = input.to_vec();
        self.apply(params, &mut amps)?;
        Ok(expectation_z_all(&amps, NUM_QUBITS))
    }
}

impl Default for ExpertCircuit {
    fn default() -> Self {
        Self {
            schedule: GateSchedule::new(ScheduleName::Ladder21, false),
            num_layers: DEFAULT_LAYERS,
        }
    }
}

/// Runs one expert on a 10-qubit state and returns `<Z_q>` for every qubit.
pub fn run_expert(circuit: &ExpertCircuit, params: &[f64], input: &StateVector) -> Result<Vec<f64>> {
    if input.num_qubits() != NUM_QUBITS {
        return Err(Error::LengthMismatch {
            what: "input qubits",
            expected: NUM_QUBITS,
            actual: input.num_qubits(),
        });
    }
    let mut amps = input.amplitudes().to_vec();
    circuit.apply(params, &mut amps)?;
    Ok(expectation_z_all(&amps, NUM_QUBITS))
}

pub fn raw_output(z_values: &[f64]) -> f64 {
    z_values.iter().sum()
}
