use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{text_to_traj_source, traj_span, traj_to_text_source};
use super::model::GptModel;
use super::sampler::{sample_token, SamplerParams};
use super::vocab::{duration_centre, TokenKind, Vocab, EOS};
use crate::camera::Trajectory;
use crate::error::Result;
use crate::tokenizer::{TokenizerModel, TrajTokenSeq};

/// Which tokens may follow in the generated span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Duration token first, then trajectory tokens, EOS only after at least one of them.
    Trajectory,
    /// Words, EOS only after at least one word.
    Text,
    Unconstrained,
}

impl Constraint {
    pub fn allows(self, vocab: &Vocab, generated: &[usize], id: usize) -> bool {
        match self {
            Constraint::Unconstrained => true,
            Constraint::Text => vocab.is_word(id) || (id == EOS && !generated.is_empty()),
            Constraint::Trajectory => match generated.len() {
                0 => vocab.is_duration(id),
                1 => vocab.is_traj(id),
                _ => vocab.is_traj(id) || id == EOS,
            },
        }
    }
}

/// Generated span (EOS stripped) and whether generation stopped without EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub truncated: bool,
}

pub fn decode_tokens(
    model: &GptModel,
    vocab: &Vocab,
    source: &[usize],
    constraint: Constraint,
    sampler: &SamplerParams,
) -> Result<Decoded> {
    sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let mut out: Vec<usize> = Vec::new();
    loop {
        if out.len() >= sampler.max_tokens || source.len() + out.len() >= model.config.context {
            tracing::warn!(tokens = out.len(), "generation stopped at the length limit without EOS");
            return Ok(Decoded { tokens: out, truncated: true });
        }
        let mut probs = model.next_token_probs(source, &out)?;
        for (id, p) in probs.iter_mut().enumerate() {
            if !constraint.allows(vocab, &out, id) {
                *p = 0.0;
            }
        }
        let mass: f64 = probs.iter().sum();
        if mass > 0.0 {
            probs.iter_mut().for_each(|p| *p /= mass);
        }
        let next = sample_token(&probs, sampler, &mut rng);
        if next == EOS {
            return Ok(Decoded { tokens: out, truncated: false });
        }
        out.push(next);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTrajectory {
    pub trajectory: Trajectory,
    pub tokens: TrajTokenSeq,
    pub truncated: bool,
}

/// Splits a generated trajectory span into codes and duration.
pub fn span_to_seq(vocab: &Vocab, span: &[usize]) -> (Vec<usize>, Option<f64>) {
    let mut codes = Vec::new();
    let mut duration = None;
    for &id in span {
        match vocab.kind(id) {
            Some(TokenKind::Duration(b)) if duration.is_none() && codes.is_empty() => duration = Some(duration_centre(b)),
            Some(TokenKind::Traj(k)) => codes.push(k),
            _ => {}
        }
    }
    (codes, duration)
}

pub fn generate_trajectory(
    model: &GptModel,
    vocab: &Vocab,
    tokenizer: &TokenizerModel,
    text: &str,
    sampler: &SamplerParams,
) -> Result<GeneratedTrajectory> {
    let words = vocab.encode_text(text)?;
    let source = text_to_traj_source(&words);
    let decoded = decode_tokens(model, vocab, &source, Constraint::Trajectory, sampler)?;
    let (codes, duration) = span_to_seq(vocab, &decoded.tokens);
    // the constraint guarantees a duration token; an empty code list only happens on truncation
    let codes = if codes.is_empty() { vec![0] } else { codes };
    let trajectory = tokenizer.decode(&codes, duration)?;
    let tokens = TrajTokenSeq { ids: codes, duration_s: trajectory.duration_s() };
    Ok(GeneratedTrajectory { trajectory, tokens, truncated: decoded.truncated })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedText {
    pub text: String,
    pub truncated: bool,
}

pub fn trajectory_to_text(
    model: &GptModel,
    vocab: &Vocab,
    tokenizer: &TokenizerModel,
    traj: &Trajectory,
    sampler: &SamplerParams,
) -> Result<GeneratedText> {
    let seq = tokenizer.tokenize(traj)?;
    let source = traj_to_text_source(&traj_span(vocab, &seq));
    let decoded = decode_tokens(model, vocab, &source, Constraint::Text, sampler)?;
    Ok(GeneratedText { text: vocab.decode_text(&decoded.tokens), truncated: decoded.truncated })
}
