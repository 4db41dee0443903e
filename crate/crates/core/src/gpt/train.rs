use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{format_example, translation_examples, Task, TokenizedPair};
use super::model::{Example, GptModel};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GptTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Stage-1 task weights: text continuation, trajectory continuation, text→traj, traj→text.
    pub mixture: [f64; 4],
}

impl Default for GptTrainConfig {
    fn default() -> Self {
        Self { steps: 2000, batch_size: 16, adam: AdamConfig::default(), mixture: [0.25; 4] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GptTrainLog {
    pub losses: Vec<f64>,
}

fn run(model: &mut GptModel, config: &GptTrainConfig, seed: u64, mut next_batch: impl FnMut(&mut ChaCha8Rng) -> Vec<Example>) -> Result<GptTrainLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(config.adam, &model.params);
    let mut log = GptTrainLog::default();
    for step in 0..config.steps {
        let batch = next_batch(&mut rng);
        let mut tape = Tape::new();
        let loss = model.loss_graph(&mut tape, &model.params, &batch, Some(&mut rng))?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::TrainingDiverged { step, loss: value });
        }
        let mut grads = tape.backward(loss, model.params.len());
        adam.step(&mut model.params, &mut grads);
        if !model.params.all_finite() {
            return Err(Error::TrainingDiverged { step, loss: f64::NAN });
        }
        tracing::debug!(step, loss = value, "gpt step");
        log.losses.push(value);
    }
    Ok(log)
}

/// Mixed-task pre-training over the four task formats.
pub fn train_stage1(model: &mut GptModel, corpus: &[TokenizedPair], config: &GptTrainConfig, seed: u64) -> Result<GptTrainLog> {
    if corpus.is_empty() {
        return Err(Error::Config("stage-1 corpus is empty".into()));
    }
    let tasks = WeightedIndex::new(config.mixture).map_err(|e| Error::Config(format!("mixture weights: {e}")))?;
    let bs = config.batch_size.max(1);
    run(model, config, seed, |rng| {
        (0..bs)
            .map(|_| {
                let task = Task::ALL[tasks.sample(rng)];
                format_example(&corpus[rng.gen_range(0..corpus.len())], task)
            })
            .collect()
    })
}

/// Supervised translation in both directions; epochs are shuffled passes over all examples.
pub fn finetune_translation(model: &mut GptModel, corpus: &[TokenizedPair], config: &GptTrainConfig, seed: u64) -> Result<GptTrainLog> {
    if corpus.is_empty() {
        return Err(Error::Config("translation corpus is empty".into()));
    }
    let examples = translation_examples(corpus);
    let bs = config.batch_size.clamp(1, examples.len());
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    run(model, config, seed, |rng| {
        if cursor + bs > order.len() {
            order = (0..examples.len()).collect();
            order.shuffle(rng);
            cursor = 0;
        }
        let batch = order[cursor..cursor + bs].iter().map(|&i| examples[i].clone()).collect();
        cursor += bs;
        batch
    })
}
