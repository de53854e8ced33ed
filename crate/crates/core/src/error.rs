use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("two-qubit gate needs distinct qubits, got {0} twice")]
    RepeatedQubit(usize),

    #[error("unsupported qubit count {0} (supported: {1})")]
    UnsupportedQubitCount(usize, &'static str),

    #[error("amplitude vector of length {0} is not a power of two")]
    BadDimension(usize),

    #[error("matrix is not {0} within tolerance")]
    NotUnitary(&'static str),

    #[error("coordinate ({x}, {y}) outside the 32x32 grid")]
    CoordinateOutOfRange { x: usize, y: usize },

    #[error("image has zero norm and cannot be amplitude encoded")]
    ZeroNorm,

    #[error("digit {0} outside 0..=9")]
    DigitOutOfRange(u8),

    #[error("idx: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("idx: stream truncated at byte offset {offset}, needed {needed} bytes")]
    Truncated { offset: usize, needed: usize },

    #[error("idx: unexpected image dimensions {rows}x{cols}, expected 28x28")]
    BadImageDims { rows: u32, cols: u32 },

    #[error("idx: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unknown gate schedule {0:?} (expected ladder21 or ladder13)")]
    UnknownSchedule(String),

    #[error("model is not calibrated")]
    Uncalibrated,

    #[error("calibration sample has zero output variance")]
    ZeroVariance,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: digest mismatch (expected {expected}, got {actual})")]
    DigestMismatch {
        path: String,
        expected: String,
        actual: String,
    },

    #[error("missing dataset file {0}")]
    MissingFile(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
