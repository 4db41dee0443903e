use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{vocabulary, words};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const SEP: usize = 3;
pub const TO_TRAJ: usize = 4;
pub const TO_TEXT: usize = 5;
const SPECIALS: [&str; 6] = ["<pad>", "<bos>", "<eos>", "<sep>", "<to_traj>", "<to_text>"];

pub const DURATION_BINS: usize = 32;
pub const DURATION_MIN_S: f64 = 0.5;
pub const DURATION_MAX_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Special,
    Word(usize),
    Traj(usize),
    Duration(usize),
}

/// Joint vocabulary: specials, then words, then trajectory codes, then duration bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    words: Vec<String>,
    codebook_size: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    words: Vec<String>,
    codebook_size: usize,
    duration_bins: usize,
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = Error;
    fn try_from(r: VocabRepr) -> Result<Self> {
        if r.duration_bins != DURATION_BINS {
            return Err(Error::Checkpoint(format!("expected {DURATION_BINS} duration bins, found {}", r.duration_bins)));
        }
        Vocab::new(r.words, r.codebook_size)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { words: v.words, codebook_size: v.codebook_size, duration_bins: DURATION_BINS }
    }
}

/// Centre of duration bin `k` (log-spaced between 0.5 s and 60 s).
pub fn duration_centre(k: usize) -> f64 {
    DURATION_MIN_S * (DURATION_MAX_S / DURATION_MIN_S).powf(k as f64 / (DURATION_BINS - 1) as f64)
}

/// Nearest duration bin in log space; out-of-range values clamp to the end bins.
pub fn duration_bin(seconds: f64) -> usize {
    let t = (seconds / DURATION_MIN_S).ln() / (DURATION_MAX_S / DURATION_MIN_S).ln();
    ((t * (DURATION_BINS - 1) as f64).round().max(0.0) as usize).min(DURATION_BINS - 1)
}

impl Vocab {
    pub fn new(words: Vec<String>, codebook_size: usize) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), SPECIALS.len() + i).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary word {w:?}")));
            }
        }
        if codebook_size == 0 {
            return Err(Error::Config("codebook_size must be positive".into()));
        }
        Ok(Self { words, codebook_size, index })
    }

    /// Vocabulary over the dataset-gen description language.
    pub fn closed(codebook_size: usize) -> Self {
        Self::new(vocabulary(), codebook_size).expect("sorted unique vocabulary")
    }

    pub fn size(&self) -> usize {
        SPECIALS.len() + self.words.len() + self.codebook_size + DURATION_BINS
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }

    fn traj_base(&self) -> usize {
        SPECIALS.len() + self.words.len()
    }

    fn dur_base(&self) -> usize {
        self.traj_base() + self.codebook_size
    }

    pub fn word_id(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn traj_id(&self, code: usize) -> usize {
        assert!(code < self.codebook_size, "code {code} out of range");
        self.traj_base() + code
    }

    pub fn duration_id(&self, bin: usize) -> usize {
        assert!(bin < DURATION_BINS, "duration bin {bin} out of range");
        self.dur_base() + bin
    }

    pub fn kind(&self, id: usize) -> Option<TokenKind> {
        match id {
            i if i < SPECIALS.len() => Some(TokenKind::Special),
            i if i < self.traj_base() => Some(TokenKind::Word(i - SPECIALS.len())),
            i if i < self.dur_base() => Some(TokenKind::Traj(i - self.traj_base())),
            i if i < self.size() => Some(TokenKind::Duration(i - self.dur_base())),
            _ => None,
        }
    }

    pub fn token_str(&self, id: usize) -> String {
        match self.kind(id) {
            Some(TokenKind::Special) => SPECIALS[id].to_owned(),
            Some(TokenKind::Word(w)) => self.words[w].clone(),
            Some(TokenKind::Traj(k)) => format!("<z{k}>"),
            Some(TokenKind::Duration(b)) => format!("<t{b}>"),
            None => format!("<invalid:{id}>"),
        }
    }

    /// Word ids for `text`; every unknown word is listed in the error.
    pub fn encode_text(&self, text: &str) -> Result<Vec<usize>> {
        let ws = words(text);
        if ws.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut unknown: Vec<String> = Vec::new();
        let ids: Vec<usize> = ws
            .iter()
            .filter_map(|w| {
                let id = self.word_id(w);
                if id.is_none() && !unknown.contains(w) {
                    unknown.push(w.clone());
                }
                id
            })
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownToken(unknown));
        }
        Ok(ids)
    }

    /// Space-joined words; non-word tokens are skipped.
    pub fn decode_text(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter_map(|&i| match self.kind(i) {
                Some(TokenKind::Word(w)) => Some(self.words[w].as_str()),
                _ => None,
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn is_word(&self, id: usize) -> bool {
        matches!(self.kind(id), Some(TokenKind::Word(_)))
    }

    pub fn is_traj(&self, id: usize) -> bool {
        matches!(self.kind(id), Some(TokenKind::Traj(_)))
    }

    pub fn is_duration(&self, id: usize) -> bool {
        matches!(self.kind(id), Some(TokenKind::Duration(_)))
    }
}
