use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SamplingMode {
    Greedy,
    TopK { k: usize },
    Nucleus { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub mode: SamplingMode,
    pub temperature: f64,
    pub seed: u64,
    /// Upper bound on generated tokens (duration + trajectory tokens, or words).
    pub max_tokens: usize,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self { mode: SamplingMode::Greedy, temperature: 1.0, seed: 0, max_tokens: 64 }
    }
}

impl SamplerParams {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SamplingMode::Greedy => {}
            SamplingMode::TopK { k } if k == 0 => return Err(Error::Config("top-k needs k ≥ 1".into())),
            SamplingMode::Nucleus { p } if !(p > 0.0 && p <= 1.0) => {
                return Err(Error::Config("nucleus p must lie in (0, 1]".into()))
            }
            _ if !(self.temperature > 0.0 && self.temperature.is_finite()) => {
                return Err(Error::Config("temperature must be positive for stochastic sampling".into()))
            }
            _ => {}
        }
        if self.max_tokens < 2 {
            return Err(Error::Config("max_tokens must be at least 2".into()));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Draws one token from `probs` (already restricted to allowed tokens).
pub fn sample_token(probs: &[f64], params: &SamplerParams, rng: &mut impl Rng) -> usize {
    if params.mode == SamplingMode::Greedy {
        return argmax(probs);
    }
    // temperature on log-probabilities
    let logits: Vec<f64> = probs.iter().map(|&p| if p > 0.0 { p.ln() / params.temperature } else { f64::NEG_INFINITY }).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weighted: Vec<(usize, f64)> = logits.iter().enumerate().map(|(i, &l)| (i, (l - max).exp())).filter(|&(_, w)| w > 0.0).collect();
    weighted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: f64 = weighted.iter().map(|w| w.1).sum();
    let keep = match params.mode {
        SamplingMode::TopK { k } => k.min(weighted.len()),
        SamplingMode::Nucleus { p } => {
            let mut acc = 0.0;
            let mut n = 0;
            for (_, w) in &weighted {
                acc += w / total;
                n += 1;
                if acc >= p {
                    break;
                }
            }
            n
        }
        SamplingMode::Greedy => unreachable!(),
    };
    let kept = &weighted[..keep.max(1)];
    let mass: f64 = kept.iter().map(|w| w.1).sum();
    let mut u = rng.gen::<f64>() * mass;
    for &(i, w) in kept {
        if u < w {
            return i;
        }
        u -= w;
    }
    kept[kept.len() - 1].0
}
