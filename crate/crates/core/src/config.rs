//! One TOML file drives every pipeline stage. Missing keys take their defaults;
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ae::AeTrainConfig;
use crate::control::WalkerConfig;
use crate::dataset::CollectionConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::rl::{EnvConfig, PpoConfig};
use crate::sim::RobotModel;

pub const TOOL_VERSION: &str = concat!("latent-gait ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: RobotModel,
    /// Simulation rates, gait timing, termination rule and controller gains.
    pub walker: WalkerConfig,
    pub dataset: CollectionConfig,
    pub autoencoder: AeTrainConfig,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.model.validate().map_err(wrap)?;
        self.walker.validate().map_err(wrap)?;
        self.autoencoder.validate().map_err(wrap)?;
        self.env.validate().map_err(wrap)?;
        self.ppo.validate().map_err(wrap)?;
        self.eval.validate().map_err(wrap)?;
        let d = &self.dataset;
        if d.speeds.is_empty() || !(d.duration > 0.0 && d.warmup >= 0.0 && d.rate > 0.0) {
            return Err(Error::Config("dataset needs speeds, positive duration and rate".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_unknown_keys_fail() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
        let partial = ExperimentConfig::from_toml("seed = 9\n[ppo]\nworkers = 2\n").unwrap();
        assert_eq!((partial.seed, partial.ppo.workers, partial.ppo.epochs), (9, 2, 4));
        let err = ExperimentConfig::from_toml("[ppo]\nworkerz = 2\n").unwrap_err().to_string();
        assert!(err.contains("workerz") && err.contains("line 2"), "{err}");
        assert!(matches!(ExperimentConfig::from_toml("[ppo]\nworkers = 0\n"), Err(Error::Config(_))));
    }
}
