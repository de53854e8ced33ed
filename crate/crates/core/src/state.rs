//! Dense statevector and in-place gate kernels.
//!
//! Qubit 0 is the most significant bit of the amplitude index, so the basis
//! state `|b_0 b_1 ... b_{n-1}>` lives at index `b_0 * 2^{n-1} + ... + b_{n-1}`.
//! For a two-qubit gate on `(a, b)` the 2-bit local index is `2 * bit_a + bit_b`.

use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 20;

/// Scalar types a statevector can be stored in.
///
/// The ansatz used by the experts is built from real rotations and CNOTs
/// acting on real amplitude-encoded inputs, so the training path runs on
/// `f64` amplitudes; the general simulator uses `Complex64`.
pub trait Amplitude: Copy + Default + Add<Output = Self> + Mul<f64, Output = Self> {
    fn norm_sqr(self) -> f64;
    /// `Re(conj(self) * other)`.
    fn re_dot(self, other: Self) -> f64;
}

impl Amplitude for f64 {
    #[inline]
    fn norm_sqr(self) -> f64 {
        self * self
    }
    #[inline]
    fn re_dot(self, other: Self) -> f64 {
        self * other
    }
}

impl Amplitude for Complex64 {
    #[inline]
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    #[inline]
    fn re_dot(self, other: Self) -> f64 {
        self.re * other.re + self.im * other.im
    }
}

/// Real 4x4 matrix acting on a qubit pair, row-major.
pub type RealGate4 = [[f64; 4]; 4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary2(pub [[Complex64; 2]; 2]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unitary4(pub [[Complex64; 4]; 4]);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn unitarity_error<const N: usize>(m: &[[Complex64; N]; N]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..N {
        for j in 0..N {
            let mut acc = Complex64::default();
            for k in 0..N {
                acc += m[k][i].conj() * m[k][j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - c(target)).norm());
        }
    }
    worst
}

impl Unitary2 {
    pub fn identity() -> Self {
        Self([[c(1.0), c(0.0)], [c(0.0), c(1.0)]])
    }

    pub fn pauli_x() -> Self {
        Self([[c(0.0), c(1.0)], [c(1.0), c(0.0)]])
    }

    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self([[c(h), c(h)], [c(h), c(-h)]])
    }

    /// `exp(-i theta Y / 2)`.
    pub fn ry(theta: f64) -> Self {
        let r = ry_real(theta);
        Self([[c(r[0][0]), c(r[0][1])], [c(r[1][0]), c(r[1][1])]])
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Self([[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]])
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        unitarity_error(&self.0) <= tol
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }
}

impl Unitary4 {
    pub fn identity() -> Self {
        let mut m = [[c(0.0); 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = c(1.0);
        }
        Self(m)
    }

    /// Control on the first (more significant) qubit of the pair.
    pub fn cnot() -> Self {
        Self::from_real(CNOT)
    }

    pub fn from_real(m: RealGate4) -> Self {
        let mut out = [[c(0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = c(m[i][j]);
            }
        }
        Self(out)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        unitarity_error(&self.0) <= tol
    }

    /// `a ⊗ b` with `a` on the more significant qubit.
    pub fn kron(a: &Unitary2, b: &Unitary2) -> Self {
        let mut out = [[c(0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = a.0[i >> 1][j >> 1] * b.0[i & 1][j & 1];
            }
        }
        Self(out)
    }

    pub fn matmul(&self, rhs: &Unitary4) -> Self {
        let mut out = [[c(0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    out[i][j] += self.0[i][k] * rhs.0[k][j];
                }
            }
        }
        Self(out)
    }
}

pub const CNOT: RealGate4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 1.0, 0.0],
];

pub fn ry_real(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[c, -s], [s, c]]
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        check_qubit_count(num_qubits)?;
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::LengthMismatch {
                what: "basis index",
                expected: dim,
                actual: index,
            });
        }
        let mut amplitudes = vec![Complex64::default(); dim];
        amplitudes[index] = c(1.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Wraps raw amplitudes. No normalization is imposed.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::BadDimension(len));
        }
        let num_qubits = len.trailing_zeros() as usize;
        check_qubit_count(num_qubits)?;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amplitudes.iter().map(|&a| c(a)).collect())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// The amplitudes as reals, if every imaginary part vanishes.
    pub fn as_real(&self) -> Option<Vec<f64>> {
        self.amplitudes
            .iter()
            .map(|a| (a.im == 0.0).then_some(a.re))
            .collect()
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amplitudes {
            *a *= factor;
        }
    }

    pub fn apply_1q(&mut self, qubit: usize, u: &Unitary2) -> Result<()> {
        check_qubit(qubit, self.num_qubits)?;
        let stride = 1usize << (self.num_qubits - 1 - qubit);
        let m = &u.0;
        let amps = &mut self.amplitudes;
        for block in (0..amps.len()).step_by(2 * stride) {
            for i in block..block + stride {
                let (a0, a1) = (amps[i], amps[i + stride]);
                amps[i] = m[0][0] * a0 + m[0][1] * a1;
                amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        Ok(())
    }

    /// Applies `u` with `qubit_a` supplying the more significant bit of the
    /// local 2-bit index.
    pub fn apply_2q(&mut self, qubit_a: usize, qubit_b: usize, u: &Unitary4) -> Result<()> {
        check_pair(qubit_a, qubit_b, self.num_qubits)?;
        let m = &u.0;
        for_each_quad(self.num_qubits, qubit_a, qubit_b, |idx| {
            let amps = &mut self.amplitudes;
            let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
            for (r, &i) in idx.iter().enumerate() {
                amps[i] = m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2] + m[r][3] * v[3];
            }
        });
        Ok(())
    }

    /// Applies a real 4x4 matrix through the shared real-gate kernel.
    pub fn apply_real_2q(&mut self, qubit_a: usize, qubit_b: usize, m: &RealGate4) -> Result<()> {
        check_pair(qubit_a, qubit_b, self.num_qubits)?;
        apply_real_2q(&mut self.amplitudes, self.num_qubits, qubit_a, qubit_b, m);
        Ok(())
    }

    /// `<Z_qubit>`; assumes a normalized state.
    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        check_qubit(qubit, self.num_qubits)?;
        Ok(expectation_z(&self.amplitudes, self.num_qubits, qubit))
    }
}

pub(crate) fn check_qubit_count(n: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n) {
        Ok(())
    } else {
        Err(Error::UnsupportedQubitCount(n, "1..=20"))
    }
}

pub(crate) fn check_qubit(q: usize, n: usize) -> Result<()> {
    if q < n {
        Ok(())
    } else {
        Err(Error::QubitOutOfRange {
            index: q,
            num_qubits: n,
        })
    }
}

pub(crate) fn check_pair(a: usize, b: usize, n: usize) -> Result<()> {
    check_qubit(a, n)?;
    check_qubit(b, n)?;
    if a == b {
        return Err(Error::RepeatedQubit(a));
    }
    Ok(())
}

#[inline]
fn insert_zero_bit(value: usize, pos: usize) -> usize {
    let low = value & ((1usize << pos) - 1);
    ((value >> pos) << (pos + 1)) | low
}

/// Visits every amplitude quadruple touched by a gate on `(a, b)`, ordered
/// by local index `2 * bit_a + bit_b`.
#[inline]
fn for_each_quad(n: usize, a: usize, b: usize, mut f: impl FnMut([usize; 4])) {
    let pa = n - 1 - a;
    let pb = n - 1 - b;
    let (lo, hi) = if pa < pb { (pa, pb) } else { (pb, pa) };
    let (ma, mb) = (1usize << pa, 1usize << pb);
    for k in 0..(1usize << (n - 2)) {
        let base = insert_zero_bit(insert_zero_bit(k, lo), hi);
        f([base, base | mb, base | ma, base | ma | mb]);
    }
}

/// In-place real 4x4 gate on raw amplitudes. Indices must already be valid.
#[inline]
pub fn apply_real_2q<T: Amplitude>(amps: &mut [T], n: usize, a: usize, b: usize, m: &RealGate4) {
    debug_assert_eq!(amps.len(), 1 << n);
    for_each_quad(n, a, b, |idx| {
        let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for (r, &i) in idx.iter().enumerate() {
            amps[i] = v[0] * m[r][0] + v[1] * m[r][1] + v[2] * m[r][2] + v[3] * m[r][3];
        }
    });
}

/// Applies `m^T`, the inverse of a real orthogonal gate.
#[inline]
pub fn apply_real_2q_transpose<T: Amplitude>(
    amps: &mut [T],
    n: usize,
    a: usize,
    b: usize,
    m: &RealGate4,
) {
    for_each_quad(n, a, b, |idx| {
        let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
        for (r, &i) in idx.iter().enumerate() {
            amps[i] = v[0] * m[0][r] + v[1] * m[1][r] + v[2] * m[2][r] + v[3] * m[3][r];
        }
    });
}

/// `acc[r][c] += sum over quads of Re(conj(left[r]) * right[c])`.
#[inline]
pub fn accumulate_pair_outer<T: Amplitude>(
    left: &[T],
    right: &[T],
    n: usize,
    a: usize,
    b: usize,
) -> [[f64; 4]; 4] {
    let mut acc = [[0.0; 4]; 4];
    for_each_quad(n, a, b, |idx| {
        let l = [left[idx[0]], left[idx[1]], left[idx[2]], left[idx[3]]];
        let r = [right[idx[0]], right[idx[1]], right[idx[2]], right[idx[3]]];
        for i in 0..4 {
            for j in 0..4 {
                acc[i][j] += l[i].re_dot(r[j]);
            }
        }
    });
    acc
}

pub fn expectation_z<T: Amplitude>(amps: &[T], n: usize, qubit: usize) -> f64 {
    let mask = 1usize << (n - 1 - qubit);
    amps.iter()
        .enumerate()
        .map(|(i, a)| {
            let p = a.norm_sqr();
            if i & mask == 0 {
                p
            } else {
                -p
            }
        })
        .sum()
}

/// `<Z_q>` for every qubit in one sweep.
pub fn expectation_z_all<T: Amplitude>(amps: &[T], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, a) in amps.iter().enumerate() {
        let p = a.norm_sqr();
        for (q, o) in out.iter_mut().enumerate() {
            if i & (1usize << (n - 1 - q)) == 0 {
                *o += p;
            } else {
                *o -= p;
            }
        }
    }
    out
}

/// Diagonal of `sum_q weights[q] * Z_q`.
pub fn weighted_z_diagonal(weights: &[f64]) -> Vec<f64> {
    let n = weights.len();
    (0..1usize << n)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(q, w)| if i & (1usize << (n - 1 - q)) == 0 { *w } else { -*w })
                .sum()
        })
        .collect()
}
