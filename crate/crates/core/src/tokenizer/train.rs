use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{Normalizer, TokenizerConfig, TokenizerLoss, TokenizerModel};
use crate::camera::Trajectory;
use crate::error::{Error, Result};
use crate::nn::{Adam, Tape};

const INIT_NOISE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: usize,
    pub mean_loss: TokenizerLoss,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenizerTrainLog {
    pub steps: Vec<TokenizerLoss>,
    pub epochs: Vec<EpochLog>,
    /// Number of dead-code re-seeds performed.
    pub refreshed: usize,
}

fn mean_losses(xs: &[TokenizerLoss]) -> TokenizerLoss {
    let n = xs.len().max(1) as f64;
    let sum = |f: fn(&TokenizerLoss) -> f64| xs.iter().map(f).sum::<f64>() / n;
    TokenizerLoss {
        recon: sum(|l| l.recon),
        recon_translation: sum(|l| l.recon_translation),
        embed: sum(|l| l.embed),
        commit: sum(|l| l.commit),
        total: sum(|l| l.total),
    }
}

/// Trains a tokenizer on `corpus`, resampled to `config.frames`.
///
/// Epochs are full passes over a per-epoch shuffle; `config.steps` counts optimizer steps.
pub fn train_tokenizer(corpus: &[Trajectory], config: TokenizerConfig, seed: u64) -> Result<(TokenizerModel, TokenizerTrainLog)> {
    if corpus.is_empty() {
        return Err(Error::Config("tokenizer corpus is empty".into()));
    }
    config.validate()?;
    let data = corpus
        .iter()
        .map(|t| if t.len() == config.frames { Ok(t.clone()) } else { crate::camera::resample(t, config.frames) })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TokenizerModel::new(config, Normalizer::fit(&data), &mut rng)?;
    let ids = model.net_ids();
    let mut adam = Adam::new(config.adam, &model.params);
    adam.set_lr_scale(ids.codebook, config.codebook_lr_scale);
    let batch_size = config.batch_size.clamp(1, data.len());
    let mut last_used = vec![0usize; config.codebook_size];
    let mut log = TokenizerTrainLog::default();
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch_losses = Vec::new();
    let mut epoch = 0;

    for step in 0..config.steps {
        if cursor + batch_size > order.len() {
            if !epoch_losses.is_empty() {
                log.epochs.push(EpochLog { epoch, step, mean_loss: mean_losses(&epoch_losses) });
                epoch_losses.clear();
                epoch += 1;
            }
            order = sample(&mut rng, data.len(), data.len()).into_vec();
            cursor = 0;
        }
        let batch: Vec<Trajectory> = order[cursor..cursor + batch_size].iter().map(|&i| data[i].clone()).collect();
        cursor += batch_size;

        if step == 0 {
            seed_codebook(&mut model, &data, batch_size, &mut rng)?;
        }

        let mut tape = Tape::new();
        let (loss, parts, sg) = model.loss_graph(&mut tape, &model.params, &batch, None)?;
        if !parts.total.is_finite() {
            return Err(Error::TrainingDiverged { step, loss: parts.total });
        }
        let mut grads = tape.backward(loss, model.params.len());
        adam.step(&mut model.params, &mut grads);
        if !model.params.all_finite() {
            return Err(Error::TrainingDiverged { step, loss: f64::NAN });
        }
        for &k in &sg.ids {
            last_used[k] = step + 1;
        }
        let dead: Vec<usize> = (0..config.codebook_size).filter(|&k| step + 1 - last_used[k] >= config.dead_code_steps).collect();
        if !dead.is_empty() {
            let cb = model.params.get_mut(ids.codebook);
            for &k in &dead {
                let src = rng.gen_range(0..sg.encoded.nrows());
                cb.slice_mut(s![k, ..]).assign(&sg.encoded.row(src));
                last_used[k] = step + 1;
            }
            adam.reset_rows(ids.codebook, &dead);
            log.refreshed += dead.len();
        }
        tracing::debug!(step, total = parts.total, recon = parts.recon, "tokenizer step");
        log.steps.push(parts);
        epoch_losses.push(parts);
    }
    if !epoch_losses.is_empty() {
        log.epochs.push(EpochLog { epoch, step: config.steps, mean_loss: mean_losses(&epoch_losses) });
    }
    Ok((model, log))
}

/// Initializes codebook rows from encoder outputs drawn across the whole corpus, so every
/// code starts near the data.
fn seed_codebook(model: &mut TokenizerModel, data: &[Trajectory], chunk: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut rows: Vec<Array2<f64>> = Vec::new();
    for part in data.chunks(chunk) {
        rows.push(model.stop_gradients(part)?.encoded);
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    let encoded = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    let n = encoded.nrows();
    let k_total = model.config.codebook_size;
    let picks: Vec<usize> = if n >= k_total { sample(rng, n, k_total).into_vec() } else { (0..k_total).map(|k| if k < n { k } else { rng.gen_range(0..n) }).collect() };
    let id = model.net_ids().codebook;
    let cb = model.params.get_mut(id);
    for (k, &src) in picks.iter().enumerate() {
        for j in 0..encoded.ncols() {
            let noise: f64 = rng.sample(StandardNormal);
            cb[[k, j]] = encoded[[src, j]] + INIT_NOISE * noise;
        }
    }
    Ok(())
}

/// Distinct codes used when tokenizing `corpus`.
pub fn codebook_usage(model: &TokenizerModel, corpus: &[Trajectory]) -> Result<usize> {
    let mut used = std::collections::BTreeSet::new();
    for t in corpus {
        used.extend(model.tokenize(t)?.ids);
    }
    Ok(used.len())
}

/// Mean per-trajectory reconstruction MSE of translations in normalized units.
pub fn reconstruction_translation_mse(model: &TokenizerModel, corpus: &[Trajectory]) -> Result<f64> {
    let mut total = 0.0;
    for t in corpus {
        let t = model.prepare(t)?;
        let seq = model.tokenize(&t)?;
        let rec = model.decode(&seq.ids, Some(seq.duration_s))?;
        let a: Array2<f64> = model.norm.features(&t);
        let b = model.norm.features(&rec);
        total += (&a.slice(s![.., 6..9]) - &b.slice(s![.., 6..9])).mapv(|v| v * v).sum() / t.len() as f64;
    }
    Ok(total / corpus.len().max(1) as f64)
}
