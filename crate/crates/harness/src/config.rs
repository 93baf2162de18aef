use std::path::{Path, PathBuf};

use ftrl_core::algorithms::{CmappoConfig, GrpoConfig, PpoConfig};
use ftrl_core::backbone::{BackboneConfig, PretrainConfig};
use ftrl_core::data::{FeatureConfig, PRESET_NAMES};
use ftrl_core::envs::Traversal;
use ftrl_core::finetune::{Algorithm, FinetuneConfig, Paradigm};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Everything a run needs. Loaded from TOML; missing fields take the
/// desk-scale defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub backbone: BackboneConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub harness: HarnessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Preset name or CSV path.
    pub source: String,
    /// Fine-tuning dataset when it differs from `source`.
    pub finetune_source: Option<String>,
    pub stride: usize,
    pub fractions: [f64; 3],
    /// Multiplies synthetic regime lengths.
    pub length_scale: f64,
    pub episode_length: usize,
    pub traversal: Traversal,
    pub features: FeatureConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: PRESET_NAMES[0].to_string(),
            finetune_source: None,
            stride: 1,
            fractions: [0.7, 0.15, 0.15],
            length_scale: 1.0,
            episode_length: 128,
            traversal: Traversal::Shuffled,
            features: FeatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub presets: Vec<String>,
    pub algorithms: Vec<Algorithm>,
    pub bench: BenchConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            presets: PRESET_NAMES.iter().map(|s| s.to_string()).collect(),
            algorithms: Algorithm::ALL.to_vec(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Environment steps per algorithm and seed.
    pub timesteps: usize,
    pub eval_episodes: usize,
    pub hidden: usize,
    pub ppo: PpoConfig,
    pub grpo: GrpoConfig,
    pub cmappo: CmappoConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let ppo = PpoConfig {
            num_steps: 512,
            ..PpoConfig::default()
        };
        Self {
            timesteps: 30_000,
            eval_episodes: 20,
            hidden: 64,
            ppo,
            grpo: GrpoConfig::default(),
            cmappo: CmappoConfig {
                subagent: ppo,
                superagent: ppo,
                ..CmappoConfig::default()
            },
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ppo = PpoConfig {
            num_steps: 256,
            minibatch_size: 64,
            ..PpoConfig::default()
        };
        Self {
            data: DataConfig::default(),
            backbone: BackboneConfig {
                context_length: 8,
                num_features: 12,
                horizon: 1,
                model_dim: 16,
                num_heads: 2,
                num_layers: 4,
                ff_dim: 32,
                dropout: 0.0,
            },
            pretrain: PretrainConfig {
                epochs: 10,
                ..PretrainConfig::default()
            },
            finetune: FinetuneConfig {
                algorithm: Algorithm::Grpo,
                paradigm: Paradigm::Actor,
                frozen_fraction: 0.5,
                total_timesteps: 4096,
                learning_rate: PretrainConfig::default().learning_rate / 10.0,
                eval_every: 512,
                critic_hidden: 64,
                ppo,
                cmappo: CmappoConfig {
                    subagent: ppo,
                    superagent: ppo,
                    ..CmappoConfig::default()
                },
                ..FinetuneConfig::default()
            },
            harness: HarnessConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.harness.seeds.is_empty() {
            return Err(HarnessError::Config("harness.seeds must not be empty".into()));
        }
        let f = self.data.fractions;
        if f.iter().any(|v| !(*v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(HarnessError::Config(format!("data.fractions {f:?} must be non-negative and sum to 1")));
        }
        if self.data.stride == 0 || self.data.episode_length == 0 {
            return Err(HarnessError::Config("data.stride and data.episode_length must be >= 1".into()));
        }
        if !(self.data.length_scale > 0.0) {
            return Err(HarnessError::Config("data.length_scale must be > 0".into()));
        }
        self.finetune.validate()?;
        Ok(())
    }

    pub fn finetune_source(&self) -> &str {
        self.data.finetune_source.as_deref().unwrap_or(&self.data.source)
    }
}
