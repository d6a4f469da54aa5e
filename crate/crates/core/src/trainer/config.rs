use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{ExperimentName, DEFAULT_TEST_COUNT};
use crate::error::{Error, Result};
use crate::networks::ModelConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub batch_size: usize,
    pub total_iterations: u64,
    pub lambda: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub checkpoint_interval: u64,
    pub seed: u64,
    pub experiment: ExperimentName,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_generator: 0.00013,
            lr_discriminator: 0.00015,
            batch_size: 8,
            total_iterations: 100_000,
            lambda: 0.01,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            checkpoint_interval: 10_000,
            seed: 0,
            experiment: ExperimentName::E,
        }
    }
}

impl TrainConfig {
    /// Learning rates may be zero (a frozen network) but not negative.
    pub fn validate(&self) -> Result<()> {
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} must be a finite non-negative number")))
            }
        };
        non_negative("lr_generator", self.lr_generator)?;
        non_negative("lr_discriminator", self.lr_discriminator)?;
        non_negative("lambda", self.lambda)?;
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidConfig(format!("{name} = {beta} must lie in [0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.total_iterations == 0 {
            return Err(Error::InvalidConfig("total_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    pub test_count: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            test_count: DEFAULT_TEST_COUNT,
        }
    }
}

/// Everything an experiment run reads from its config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
}

impl ExperimentConfig {
    /// Reduced-cost setup for a single CPU: 128×128 inputs through the full
    /// seven-stage generator, narrower layers, batch 4, 2000 iterations.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig {
                image_size: 128,
                generator_base_channels: DESK_BASE_CHANNELS,
                discriminator_base_channels: DESK_BASE_CHANNELS,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                batch_size: 4,
                total_iterations: 2000,
                checkpoint_interval: 500,
                ..TrainConfig::default()
            },
            split: SplitConfig { seed: 0, test_count: 2 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

/// Channel base of the desk preset's networks.
pub const DESK_BASE_CHANNELS: usize = 16;
