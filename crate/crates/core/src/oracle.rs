//! Brute-force dense-matrix reference for the gate kernels. Test use only;
//! memory grows as `4^n`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{check_pair, check_qubit, StateVector, Unitary2, Unitary4};

pub const MAX_ORACLE_QUBITS: usize = 12;

#[derive(Clone, Debug)]
pub enum PlacedGate {
    One { qubit: usize, u: Unitary2 },
    Two { a: usize, b: usize, u: Unitary4 },
}

impl PlacedGate {
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        match self {
            PlacedGate::One { qubit, u } => state.apply_1q(*qubit, u),
            PlacedGate::Two { a, b, u } => state.apply_2q(*a, *b, u),
        }
    }
}

/// Row-major square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![Complex64::default(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, data }
    }

    pub fn from_rows<const N: usize>(rows: &[[Complex64; N]; N]) -> Self {
        Self {
            dim: N,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn kron(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let dim = self.dim * rhs.dim;
        let mut data = vec![Complex64::default(); dim * dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let a = self.get(i, j);
                if a == Complex64::default() {
                    continue;
                }
                for k in 0..rhs.dim {
                    for l in 0..rhs.dim {
                        data[(i * rhs.dim + k) * dim + j * rhs.dim + l] = a * rhs.get(k, l);
                    }
                }
            }
        }
        DenseMatrix { dim, data }
    }

    /// `self * rhs`, skipping structural zeros of `self`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim);
        let dim = self.dim;
        let mut data = vec![Complex64::default(); dim * dim];
        for i in 0..dim {
            let out = &mut data[i * dim..(i + 1) * dim];
            for k in 0..dim {
                let a = self.data[i * dim + k];
                if a == Complex64::default() {
                    continue;
                }
                let row = &rhs.data[k * dim..(k + 1) * dim];
                for (o, r) in out.iter_mut().zip(row) {
                    *o += a * r;
                }
            }
        }
        DenseMatrix { dim, data }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `<v|M|v>`.
    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let mv = self.apply(v);
        v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }
}

fn check_oracle_size(num_qubits: usize) -> Result<()> {
    if (1..=MAX_ORACLE_QUBITS).contains(&num_qubits) {
        Ok(())
    } else {
        Err(Error::UnsupportedQubitCount(num_qubits, "1..=12 for the dense oracle"))
    }
}

/// `I ⊗ ... ⊗ u ⊗ ... ⊗ I` with `u` at position `qubit` (qubit 0 leftmost).
pub fn embed_1q(u: &Unitary2, qubit: usize, num_qubits: usize) -> Result<DenseMatrix> {
    check_oracle_size(num_qubits)?;
    check_qubit(qubit, num_qubits)?;
    let left = DenseMatrix::identity(1 << qubit);
    let right = DenseMatrix::identity(1 << (num_qubits - qubit - 1));
    Ok(left.kron(&DenseMatrix::from_rows(&u.0)).kron(&right))
}

/// Embeds a two-qubit gate on arbitrary (possibly non-adjacent, reversed)
/// positions: entry `(i, j)` is `u[loc(i)][loc(j)]` when `i` and `j` agree on
/// every other bit, else zero.
pub fn embed_2q(u: &Unitary4, a: usize, b: usize, num_qubits: usize) -> Result<DenseMatrix> {
    check_oracle_size(num_qubits)?;
    check_pair(a, b, num_qubits)?;
    let dim = 1usize << num_qubits;
    let bit = |x: usize, q: usize| (x >> (num_qubits - 1 - q)) & 1;
    let touched = (1usize << (num_qubits - 1 - a)) | (1usize << (num_qubits - 1 - b));
    let mut m = DenseMatrix {
        dim,
        data: vec![Complex64::default(); dim * dim],
    };
    for i in 0..dim {
        for j in 0..dim {
            if (i ^ j) & !touched != 0 {
                continue;
            }
            let li = 2 * bit(i, a) + bit(i, b);
            let lj = 2 * bit(j, a) + bit(j, b);
            m.data[i * dim + j] = u.0[li][lj];
        }
    }
    Ok(m)
}

pub fn embed(gate: &PlacedGate, num_qubits: usize) -> Result<DenseMatrix> {
    match gate {
        PlacedGate::One { qubit, u } => embed_1q(u, *qubit, num_qubits),
        PlacedGate::Two { a, b, u } => embed_2q(u, *a, *b, num_qubits),
    }
}

/// Full unitary `G_k ... G_1` of a gate sequence applied first-to-last.
pub fn dense_unitary_oracle(gates: &[PlacedGate], num_qubits: usize) -> Result<DenseMatrix> {
    check_oracle_size(num_qubits)?;
    let mut total = DenseMatrix::identity(1 << num_qubits);
    for g in gates {
        total = embed(g, num_qubits)?.matmul(&total);
    }
    Ok(total)
}

/// `Z` on `qubit`, identity elsewhere.
pub fn dense_z(qubit: usize, num_qubits: usize) -> Result<DenseMatrix> {
    let z = Unitary2([
        [Complex64::new(1.0, 0.0), Complex64::default()],
        [Complex64::default(), Complex64::new(-1.0, 0.0)],
    ]);
    embed_1q(&z, qubit, num_qubits)
}
