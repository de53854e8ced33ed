//! Amplitude encoding of padded 32x32 images into 10 qubits.
//!
//! Pixel `(x, y)` (row `x`, column `y`) maps to the basis state
//! `|x0 y0 x1 y1 ... x4 y4>` where `x0`/`y0` are the most significant bits
//! of the coordinates. Qubit `2i` therefore carries `x_i` and qubit `2i + 1`
//! carries `y_i`.

use crate::error::{Error, Result};
use crate::mnist::{PIXELS, SIDE};
use crate::state::{StateVector, Unitary2};

pub const GRID: usize = 32;
pub const BORDER: usize = (GRID - SIDE) / 2;
pub const NUM_QUBITS: usize = 10;
pub const DIM: usize = GRID * GRID;

/// Qubit holding bit `i` of the row coordinate.
pub const fn x_qubit(i: usize) -> usize {
    2 * i
}

/// Qubit holding bit `i` of the column coordinate.
pub const fn y_qubit(i: usize) -> usize {
    2 * i + 1
}

pub type Grid = [[f64; GRID]; GRID];

/// A 32x32 image with intensities in `[0, 1]` and nonzero norm.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedImage {
    pixels: Box<Grid>,
    source_norm: f64,
}

impl PaddedImage {
    pub fn from_grid(pixels: Grid) -> Result<Self> {
        if let Some(bad) = pixels.iter().flatten().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidConfig(format!("pixel intensity {bad} outside [0, 1]")));
        }
        let source_norm = grid_norm(&pixels);
        if source_norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            pixels: Box::new(pixels),
            source_norm,
        })
    }

    pub fn pixels(&self) -> &Grid {
        &self.pixels
    }

    pub fn source_norm(&self) -> f64 {
        self.source_norm
    }

    /// The 28x28 interior flattened row-major.
    pub fn interior(&self) -> [f64; PIXELS] {
        std::array::from_fn(|i| self.pixels[i / SIDE + BORDER][i % SIDE + BORDER])
    }
}

fn grid_norm(g: &Grid) -> f64 {
    g.iter().flatten().map(|p| p * p).sum::<f64>().sqrt()
}

/// Scales raw intensities by 1/255 and centres them in a zero border.
pub fn pad_image(raw: &[u8; PIXELS]) -> Result<PaddedImage> {
    let mut pixels = [[0.0; GRID]; GRID];
    for (i, &v) in raw.iter().enumerate() {
        pixels[i / SIDE + BORDER][i % SIDE + BORDER] = v as f64 / 255.0;
    }
    PaddedImage::from_grid(pixels)
}

/// Interleaves the bits of `x` and `y`, `x` leading.
pub fn pixel_to_amplitude_index(x: usize, y: usize) -> Result<usize> {
    if x >= GRID || y >= GRID {
        return Err(Error::CoordinateOutOfRange { x, y });
    }
    let mut index = 0;
    for bit in (0..5).rev() {
        index = (index << 2) | (((x >> bit) & 1) << 1) | ((y >> bit) & 1);
    }
    Ok(index)
}

pub fn amplitude_index_to_pixel(index: usize) -> (usize, usize) {
    let (mut x, mut y) = (0, 0);
    for bit in 0..5 {
        y |= ((index >> (2 * bit)) & 1) << bit;
        x |= ((index >> (2 * bit + 1)) & 1) << bit;
    }
    (x, y)
}

/// Normalized real amplitudes of any non-negative grid.
///
/// Each amplitude is `sqrt(v^2 / S)` with `S` the sum of squares, so when
/// `a * values` is exactly representable and the squares sum without
/// rounding, the encoding of the scaled grid is bit-identical.
pub fn encode_values(values: &Grid) -> Result<Vec<f64>> {
    let sum_sq: f64 = values.iter().flatten().map(|v| v * v).sum();
    if sum_sq == 0.0 || !sum_sq.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let mut amps = vec![0.0; DIM];
    for (x, row) in values.iter().enumerate() {
        for (y, &v) in row.iter().enumerate() {
            amps[pixel_to_amplitude_index(x, y)?] = (v * v / sum_sq).sqrt().copysign(v);
        }
    }
    Ok(amps)
}

pub fn encode_real(img: &PaddedImage) -> Vec<f64> {
    // PaddedImage guarantees a nonzero norm
    encode_values(&img.pixels).expect("padded image has nonzero norm")
}

pub fn amplitude_encode(img: &PaddedImage) -> StateVector {
    StateVector::from_real(&encode_real(img)).expect("1024 amplitudes")
}

/// Stride-2 1x2 convolution along columns: each pair `(c[x][y], c[x][y+1])`
/// with even `y` becomes `(a c0 + b c1, g c0 + d c1)`.
pub fn conv_1x2_stride2(values: &Grid, m: [[f64; 2]; 2]) -> Grid {
    let mut out = *values;
    for (row_in, row_out) in values.iter().zip(out.iter_mut()) {
        for y in (0..GRID).step_by(2) {
            let (c0, c1) = (row_in[y], row_in[y + 1]);
            row_out[y] = m[0][0] * c0 + m[0][1] * c1;
            row_out[y + 1] = m[1][0] * c0 + m[1][1] * c1;
        }
    }
    out
}

/// Whether a real orthogonal gate on qubit `y4` of the encoded image equals
/// the classical stride-2 1x2 convolution, scaled by the shared `1/N`.
pub fn conv_equivalence_check(
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    img: &PaddedImage,
) -> Result<bool> {
    let m = [[alpha, beta], [gamma, delta]];
    let u = Unitary2::from_real(m);
    if !u.is_unitary(1e-12) {
        return Err(Error::NotUnitary("orthogonal"));
    }
    let mut state = amplitude_encode(img);
    state.apply_1q(y_qubit(4), &u)?;

    let classical = conv_1x2_stride2(img.pixels(), m);
    let n = img.source_norm();
    for (x, row) in classical.iter().enumerate() {
        for (y, &v) in row.iter().enumerate() {
            let amp = state.amplitudes()[pixel_to_amplitude_index(x, y)?];
            if (amp.re - v / n).abs() > 1e-12 || amp.im.abs() > 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
