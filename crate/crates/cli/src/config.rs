use std::path::{Path, PathBuf};

use chatcam_core::anchor::{EmbeddingProvider, RefineConfig, RemoteProvider, SyntheticProvider};
use chatcam_core::dataset::DatasetConfig;
use chatcam_core::gpt::{GptConfig, GptTrainConfig};
use chatcam_core::tokenizer::TokenizerConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GptProfile {
    Reduced,
    Full,
}

impl GptProfile {
    pub fn config(self, vocab_size: usize) -> GptConfig {
        match self {
            GptProfile::Reduced => GptConfig::reduced(vocab_size),
            GptProfile::Full => GptConfig::full(vocab_size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingConfig {
    Synthetic { dim: usize, seed: u64 },
    /// Endpoint and key come from `CHATCAM_EMBED_URL` / `CHATCAM_EMBED_KEY`.
    Remote { dim: usize },
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Synthetic { dim: SyntheticProvider::DEFAULT_DIM, seed: 0 }
    }
}

impl EmbeddingConfig {
    pub fn provider(&self) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbeddingConfig::Synthetic { dim, seed } => Box::new(SyntheticProvider::new(*dim, *seed)),
            EmbeddingConfig::Remote { dim } => Box::new(
                RemoteProvider::from_env(*dim)
                    .ok_or_else(|| anyhow::anyhow!("remote embeddings need {}", RemoteProvider::ENDPOINT_VAR))?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    pub scene_dir: Option<PathBuf>,
    pub default_seed: u64,
    pub embedding: EmbeddingConfig,
    pub refine: RefineConfig,
    /// Use the chat planner when `CHATCAM_PLANNER_URL` is set.
    pub remote_planner: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            scene_dir: None,
            default_seed: 0,
            embedding: EmbeddingConfig::default(),
            refine: RefineConfig::default(),
            remote_planner: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub dataset: DatasetConfig,
    pub tokenizer: TokenizerConfig,
    pub gpt_profile: GptProfile,
    pub stage1: GptTrainConfig,
    pub finetune: GptTrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            tokenizer: TokenizerConfig::default(),
            gpt_profile: GptProfile::Reduced,
            stage1: GptTrainConfig::default(),
            finetune: GptTrainConfig { steps: 500, ..Default::default() },
        }
    }
}

/// Everything a `--config` TOML file may set; missing sections take defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub training: TrainingConfig,
    pub service: ServiceConfig,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }
}
