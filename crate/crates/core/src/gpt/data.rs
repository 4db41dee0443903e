use serde::{Deserialize, Serialize};

use super::model::Example;
use super::vocab::{duration_bin, Vocab, BOS, EOS, SEP, TO_TEXT, TO_TRAJ};
use crate::dataset::TextTrajPair;
use crate::error::Result;
use crate::tokenizer::{TokenizerModel, TrajTokenSeq};

/// A text/trajectory pair in token form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPair {
    pub text: Vec<usize>,
    /// Duration token followed by trajectory tokens.
    pub traj: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    TextContinuation,
    TrajContinuation,
    TextToTraj,
    TrajToText,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::TextContinuation, Task::TrajContinuation, Task::TextToTraj, Task::TrajToText];
}

/// `[duration, z_1 … z_L]` as vocabulary ids.
pub fn traj_span(vocab: &Vocab, seq: &TrajTokenSeq) -> Vec<usize> {
    let mut out = vec![vocab.duration_id(duration_bin(seq.duration_s))];
    out.extend(seq.ids.iter().map(|&k| vocab.traj_id(k)));
    out
}

pub fn text_to_traj_source(text: &[usize]) -> Vec<usize> {
    let mut s = vec![BOS];
    s.extend_from_slice(text);
    s.extend([SEP, TO_TRAJ]);
    s
}

pub fn traj_to_text_source(traj: &[usize]) -> Vec<usize> {
    let mut s = vec![BOS];
    s.extend_from_slice(traj);
    s.extend([SEP, TO_TEXT]);
    s
}

fn with_eos(xs: &[usize]) -> Vec<usize> {
    let mut t = xs.to_vec();
    t.push(EOS);
    t
}

/// Formats one pair for `task`.
pub fn format_example(pair: &TokenizedPair, task: Task) -> Example {
    match task {
        Task::TextContinuation => Example { source: vec![BOS], target: with_eos(&pair.text) },
        Task::TrajContinuation => Example { source: vec![BOS], target: with_eos(&pair.traj) },
        Task::TextToTraj => Example { source: text_to_traj_source(&pair.text), target: with_eos(&pair.traj) },
        Task::TrajToText => Example { source: traj_to_text_source(&pair.traj), target: with_eos(&pair.text) },
    }
}

/// Translation examples in both directions, pair by pair.
pub fn translation_examples(pairs: &[TokenizedPair]) -> Vec<Example> {
    pairs.iter().flat_map(|p| [format_example(p, Task::TextToTraj), format_example(p, Task::TrajToText)]).collect()
}

pub fn tokenize_pair(vocab: &Vocab, tokenizer: &TokenizerModel, pair: &TextTrajPair) -> Result<TokenizedPair> {
    let text = vocab.encode_text(&pair.text)?;
    let seq = tokenizer.tokenize(&pair.traj)?;
    Ok(TokenizedPair { text, traj: traj_span(vocab, &seq) })
}

pub fn tokenize_pairs(vocab: &Vocab, tokenizer: &TokenizerModel, pairs: &[TextTrajPair]) -> Result<Vec<TokenizedPair>> {
    pairs.iter().map(|p| tokenize_pair(vocab, tokenizer, p)).collect()
}
