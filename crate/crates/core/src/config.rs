//! Experiment configuration file handling.

use crate::ppo::PpoConfig;
use crate::env::EnvConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("failed to parse {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Network shape of the actor and critic.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub hidden: Vec<usize>,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64] }
    }
}

/// Grid-search settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Points per frequency and per reward axis.
    pub grid_points: usize,
    /// Refinement rounds around the coarse optimum; 0 disables refinement.
    pub refine_rounds: usize,
    /// Window shrink factor per refinement round.
    pub refine_shrink: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { grid_points: 33, refine_rounds: 2, refine_shrink: 0.25 }
    }
}

/// Top-level experiment configuration; every section and field is optional
/// in the file and falls back to the published experiment settings.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub nn: NnConfig,
    pub oracle: OracleConfig,
    /// Output directory for CSV artifacts; flags and the environment
    /// variable override this.
    pub output_dir: Option<String>,
    /// Seeds to run; a `--seed` flag overrides this with a single seed.
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate().map_err(ConfigError::Invalid)?;
        self.ppo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.nn.hidden.is_empty() || self.nn.hidden.iter().any(|&w| w == 0) {
            return Err(ConfigError::Invalid("nn.hidden must list positive layer widths".into()));
        }
        if self.oracle.grid_points < 2 {
            return Err(ConfigError::Invalid("oracle.grid_points must be at least 2".into()));
        }
        if !(0.0 < self.oracle.refine_shrink && self.oracle.refine_shrink <= 1.0) {
            return Err(ConfigError::Invalid("oracle.refine_shrink must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Seeds to run: the override if given, otherwise the configured list,
    /// otherwise the default seed 312.
    pub fn effective_seeds(&self, override_seed: Option<u64>) -> Vec<u64> {
        if let Some(seed) = override_seed {
            return vec![seed];
        }
        if self.seeds.is_empty() {
            vec![312]
        } else {
            self.seeds.clone()
        }
    }
}
