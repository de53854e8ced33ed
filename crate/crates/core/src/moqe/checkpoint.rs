//! JSON checkpoint of a mixture model.
//!
//! ```json
//! {
//!   "format": "moqe-checkpoint",
//!   "version": 1,
//!   "schedule": "ladder21",
//!   "reversed": false,
//!   "layers": 3,
//!   "num_experts": 2,
//!   "nu": 1.83,
//!   "seed": 7,
//!   "epoch": 12,
//!   "experts": [[0.01, ...], [...]]
//! }
//! ```
//! Angles are written in shortest round-trip form, so a reload is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MoqeModel;
use crate::ansatz::{ExpertCircuit, GateSchedule, ScheduleName};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "moqe-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub schedule: ScheduleName,
    #[serde(default)]
    pub reversed: bool,
    pub layers: usize,
    pub num_experts: usize,
    pub nu: Option<f64>,
    pub seed: u64,
    pub epoch: usize,
    pub experts: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn from_model(model: &MoqeModel, epoch: usize) -> Self {
        let schedule = model.circuit().schedule();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            schedule: schedule.name(),
            reversed: schedule.reversed(),
            layers: model.circuit().num_layers(),
            num_experts: model.num_experts(),
            nu: model.nu(),
            seed: model.seed(),
            epoch,
            experts: model.experts().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn to_model(&self) -> Result<MoqeModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {:?} version {}",
                self.format, self.version
            )));
        }
        if self.experts.len() != self.num_experts {
            return Err(Error::Checkpoint(format!(
                "num_experts is {} but {} parameter vectors are stored",
                self.num_experts,
                self.experts.len()
            )));
        }
        let circuit = ExpertCircuit::new(GateSchedule::new(self.schedule, self.reversed), self.layers)?;
        MoqeModel::from_parts(circuit, self.experts.clone(), self.nu, self.seed)
            .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moqe::init_model;

    #[test]
    fn round_trip_is_bit_exact() {
        let model = init_model(3, 99).unwrap().with_nu(1.234_567_890_123_456_7).unwrap();
        let ck = Checkpoint::from_model(&model, 5);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let model = init_model(2, 1).unwrap();
        let mut ck = Checkpoint::from_model(&model, 0);
        ck.experts[1].pop();
        assert!(matches!(ck.to_model(), Err(Error::Checkpoint(_))));
        let mut ck = Checkpoint::from_model(&model, 0);
        ck.version = 9;
        assert!(ck.to_model().is_err());
        let mut ck = Checkpoint::from_model(&model, 0);
        ck.num_experts = 3;
        assert!(ck.to_model().is_err());
        assert!(Checkpoint::from_json("{\"format\": 1}").is_err());
        let json = Checkpoint::from_model(&model, 0).to_json().unwrap();
        let extra = json.replacen('{', "{\"bogus\": 1,", 1);
        assert!(Checkpoint::from_json(&extra).is_err());
    }
}
