//! CineGPT: a decoder-only transformer over joint text and trajectory tokens.

mod data;
mod generate;
mod model;
mod sampler;
mod train;
mod vocab;

use std::path::Path;

pub use data::{
    format_example, text_to_traj_source, tokenize_pair, tokenize_pairs, traj_span, traj_to_text_source, translation_examples, Task,
    TokenizedPair,
};
pub use generate::{
    decode_tokens, generate_trajectory, span_to_seq, trajectory_to_text, Constraint, Decoded, GeneratedText, GeneratedTrajectory,
};
pub use model::{Example, GptConfig, GptModel};
pub use sampler::{argmax, sample_token, SamplerParams, SamplingMode};
pub use train::{finetune_translation, train_stage1, GptTrainConfig, GptTrainLog};
pub use vocab::*;

use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;

pub const CHECKPOINT_KIND: &str = "cinegpt";

/// A trained model together with its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct CineGpt {
    pub model: GptModel,
    pub vocab: Vocab,
}

impl CineGpt {
    pub fn new(vocab: Vocab, config: GptConfig, rng: &mut impl rand::Rng) -> Result<Self> {
        if config.vocab_size != vocab.size() {
            return Err(Error::Config(format!("config vocab_size {} but vocabulary has {}", config.vocab_size, vocab.size())));
        }
        Ok(Self { model: GptModel::new(config, rng)?, vocab })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            meta: serde_json::json!({ "config": self.model.config, "vocab": self.vocab }),
            params: self.model.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let ck = ck.expect_kind(CHECKPOINT_KIND)?;
        let config: GptConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let vocab: Vocab = serde_json::from_value(ck.meta["vocab"].clone())?;
        if config.vocab_size != vocab.size() {
            return Err(Error::Checkpoint("vocabulary size does not match config".into()));
        }
        Ok(Self { model: GptModel::from_params(config, ck.params)?, vocab })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}
