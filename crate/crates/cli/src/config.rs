//! Run configuration: defaults, then an optional TOML file, then flags.
//!
//! The file uses the flag names with `_` in place of `-`:
//!
//! ```toml
//! experts = 4
//! epochs = 12
//! batch_size = 4
//! lr = 0.01
//! seed = 0
//! schedule = "ladder21"
//! reversed = false
//! layers = 3
//! grad = "adjoint"
//! train_subset = 50000
//! data_dir = "data/mnist"
//! out_dir = "runs/moqe-4x12"
//! threads = 1
//! channels = [8, 8, 8, 8]   # baseline cnn
//! hidden = 4                # baseline cnn
//! ```
//!
//! Every run writes the resolved form to `config.toml` in its output
//! directory, stamped with the command and the crate version. Feeding that
//! file back through `--config` replays the run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use moqe::{GradMethod, ScheduleName};
use serde::{Deserialize, Serialize};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    pub experts: usize,
    pub epochs: Option<usize>,
    pub batch_size: usize,
    pub lr: Option<f64>,
    pub seed: u64,
    pub schedule: ScheduleName,
    pub reversed: bool,
    pub layers: usize,
    pub grad: GradMethod,
    pub train_subset: usize,
    pub data_dir: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub threads: usize,
    pub channels: [usize; 4],
    pub hidden: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            version: VERSION.into(),
            experts: 1,
            epochs: None,
            batch_size: 4,
            lr: None,
            seed: 0,
            schedule: ScheduleName::Ladder21,
            reversed: false,
            layers: moqe::ansatz::DEFAULT_LAYERS,
            grad: GradMethod::Adjoint,
            train_subset: 50_000,
            data_dir: PathBuf::from("data/mnist"),
            out_dir: None,
            threads: 1,
            channels: [8, 8, 8, 8],
            hidden: 4,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }

    /// Output directory, defaulting to `runs/<command>-seed<seed>`.
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", self.command, self.seed)))
    }
}

/// Flags shared by the data-using commands. Unset flags leave the file value.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML file with the same keys as the flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub experts: Option<usize>,
    /// 0 writes the initial (calibrated) model without training
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub schedule: Option<ScheduleName>,
    /// Apply each layer's placements in reverse order
    #[arg(long)]
    pub reversed: bool,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub grad: Option<GradMethod>,
    #[arg(long)]
    pub train_subset: Option<usize>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 1 gives bit-identical reruns
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self, command: &str) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.command = command.into();
        cfg.version = VERSION.into();
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(experts, batch_size, seed, schedule, layers, grad, train_subset, data_dir, threads);
        if self.epochs.is_some() {
            cfg.epochs = self.epochs;
        }
        if self.lr.is_some() {
            cfg.lr = self.lr;
        }
        if self.out_dir.is_some() {
            cfg.out_dir = self.out_dir.clone();
        }
        cfg.reversed |= self.reversed;
        anyhow::ensure!(cfg.threads >= 1, "--threads must be at least 1");
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "experts = 8\nlr = 0.02\nschedule = \"ladder13\"\n").unwrap();
        let o = Overrides {
            config: Some(path),
            experts: Some(2),
            ..Default::default()
        };
        let cfg = o.resolve("train").unwrap();
        assert_eq!(cfg.experts, 2);
        assert_eq!(cfg.lr, Some(0.02));
        assert_eq!(cfg.schedule, ScheduleName::Ladder13);
        assert_eq!(cfg.batch_size, 4);

        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("expert = 3\n").is_err());
    }
}
