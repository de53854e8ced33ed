//! Classical reference classifiers trained on the same parity task.

pub mod cnn;
pub mod quadratic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamConfig;

pub use cnn::{
    avg_pool_2x2, cnn_backward, cnn_forward, conv2d_3x3, count_params, evaluate_cnn, published_param_count,
    train_cnn, Tensor, TinyCnn, TinyCnnConfig,
};
pub use quadratic::{
    evaluate_quadratic, quad_output, train_quadratic, QuadraticClassifier, QUADRATIC_PARAMS,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            epochs: 1,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("need at least one epoch".into()));
        }
        self.adam.validate()
    }
}
