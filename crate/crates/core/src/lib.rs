//! Exact statevector simulation and joint training of a mixture of
//! amplitude-encoded quantum experts for MNIST parity, with the classical
//! quadratic and small-CNN comparators.

pub mod ansatz;
pub mod autodiff;
pub mod baselines;
pub mod encoding;
pub mod error;
pub mod metrics;
pub mod mnist;
pub mod moqe;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod state;

pub use ansatz::{ExpertCircuit, GateSchedule, ScheduleName};
pub use autodiff::{GradMethod, GradientVector};
pub use encoding::PaddedImage;
pub use error::{Error, Result};
pub use metrics::{EpochRecord, Metrics};
pub use mnist::{DatasetSplit, MnistDataset, RawSample};
pub use moqe::{MoqeModel, TrainConfig};
pub use state::StateVector;
