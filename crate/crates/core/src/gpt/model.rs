use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::PAD;
use crate::error::{Error, Result};
use crate::nn::{softmax_rows, AttnSpec, Grads, ParamId, ParamStore, Tape, Var};

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GptConfig {
    pub vocab_size: usize,
    pub layers: usize,
    pub model_dim: usize,
    pub heads: usize,
    /// Per-head attention width.
    pub head_dim: usize,
    pub context: usize,
    pub dropout: f64,
}

impl GptConfig {
    /// Desk-scale default: 4 layers, width 128, 4 heads of 32.
    pub fn reduced(vocab_size: usize) -> Self {
        Self { vocab_size, layers: 4, model_dim: 128, heads: 4, head_dim: 32, context: 128, dropout: 0.0 }
    }

    /// 24 layers, width 256, 4 heads of 64.
    pub fn full(vocab_size: usize) -> Self {
        Self { vocab_size, layers: 24, model_dim: 256, heads: 4, head_dim: 64, context: 128, dropout: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 || self.layers == 0 || self.heads == 0 || self.head_dim == 0 || self.context == 0 {
            return Err(Error::Config("gpt config needs vocab ≥ 2 and positive layers/heads/head_dim/context".into()));
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::Config(format!("model_dim {} not divisible by heads {}", self.model_dim, self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One training or scoring sequence: the source is fully visible, loss falls on the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block {
    ln1: (ParamId, ParamId),
    qkv: (ParamId, ParamId),
    proj: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
    fc: (ParamId, ParamId),
    out: (ParamId, ParamId),
}

/// Pre-LN decoder-only transformer with learned positions and an untied output head.
#[derive(Debug, Clone, PartialEq)]
pub struct GptModel {
    pub config: GptConfig,
    pub params: ParamStore,
    tok: ParamId,
    pos: ParamId,
    blocks: Vec<Block>,
    ln_f: (ParamId, ParamId),
    head: (ParamId, ParamId),
}

impl GptModel {
    pub fn new(config: GptConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (d, inner) = (config.model_dim, config.heads * config.head_dim);
        let resid_std = INIT_STD / (2.0 * config.layers as f64).sqrt();
        let mut p = ParamStore::new();
        let tok = p.normal("tok_emb", config.vocab_size, d, INIT_STD, rng);
        let pos = p.normal("pos_emb", config.context, d, INIT_STD, rng);
        let mut blocks = Vec::new();
        for l in 0..config.layers {
            let n = |s: &str| format!("h{l}.{s}");
            blocks.push(Block {
                ln1: (p.ones(n("ln1.g"), 1, d), p.zeros(n("ln1.b"), 1, d)),
                qkv: (p.normal(n("attn.qkv.w"), d, 3 * inner, INIT_STD, rng), p.zeros(n("attn.qkv.b"), 1, 3 * inner)),
                proj: (p.normal(n("attn.proj.w"), inner, d, resid_std, rng), p.zeros(n("attn.proj.b"), 1, d)),
                ln2: (p.ones(n("ln2.g"), 1, d), p.zeros(n("ln2.b"), 1, d)),
                fc: (p.normal(n("mlp.fc.w"), d, 4 * d, INIT_STD, rng), p.zeros(n("mlp.fc.b"), 1, 4 * d)),
                out: (p.normal(n("mlp.proj.w"), 4 * d, d, resid_std, rng), p.zeros(n("mlp.proj.b"), 1, d)),
            });
        }
        let ln_f = (p.ones("ln_f.g", 1, d), p.zeros("ln_f.b", 1, d));
        let head = (p.normal("head.w", d, config.vocab_size, INIT_STD, rng), p.zeros("head.b", 1, config.vocab_size));
        Ok(Self { config, params: p, tok, pos, blocks, ln_f, head })
    }

    /// Rebinds parameter handles by name (used after loading).
    pub fn from_params(config: GptConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let get = |n: String| params.find(&n).ok_or_else(|| Error::Checkpoint(format!("missing tensor {n}")));
        let pair = |n: &str| -> Result<(ParamId, ParamId)> {
            let (a, b) = if n.contains("ln") { ("g", "b") } else { ("w", "b") };
            Ok((get(format!("{n}.{a}"))?, get(format!("{n}.{b}"))?))
        };
        let mut blocks = Vec::new();
        for l in 0..config.layers {
            blocks.push(Block {
                ln1: pair(&format!("h{l}.ln1"))?,
                qkv: pair(&format!("h{l}.attn.qkv"))?,
                proj: pair(&format!("h{l}.attn.proj"))?,
                ln2: pair(&format!("h{l}.ln2"))?,
                fc: pair(&format!("h{l}.mlp.fc"))?,
                out: pair(&format!("h{l}.mlp.proj"))?,
            });
        }
        let model = Self {
            config,
            tok: get("tok_emb".into())?,
            pos: get("pos_emb".into())?,
            blocks,
            ln_f: pair("ln_f")?,
            head: pair("head")?,
            params: params.clone(),
        };
        if model.params.get(model.tok).dim() != (config.vocab_size, config.model_dim)
            || model.params.get(model.pos).nrows() != config.context
        {
            return Err(Error::Checkpoint("embedding shapes do not match config".into()));
        }
        Ok(model)
    }

    pub fn head_ids(&self) -> (ParamId, ParamId) {
        self.head
    }

    /// Logits for a padded batch: `seqs` all have length `t`; `prefix[b]` positions are fully visible.
    /// With `dropout_rng`, dropout is applied at the configured rate.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        seqs: &[Vec<usize>],
        prefix: &[usize],
        mut dropout_rng: Option<&mut dyn rand::RngCore>,
    ) -> Var {
        let (b, t) = (seqs.len(), seqs[0].len());
        let c = &self.config;
        let flat: Vec<usize> = seqs.iter().flatten().copied().collect();
        let positions: Vec<usize> = (0..b).flat_map(|_| 0..t).collect();
        let tok = tape.param(params, self.tok);
        let pos = tape.param(params, self.pos);
        let te = tape.gather(tok, &flat);
        let pe = tape.gather(pos, &positions);
        let mut x = tape.add(te, pe);
        let spec = AttnSpec { batch: b, seq: t, heads: c.heads, head_dim: c.head_dim, prefix: prefix.to_vec() };
        for blk in &self.blocks {
            let h = self.ln(tape, params, x, blk.ln1);
            let qkv = self.lin(tape, params, h, blk.qkv);
            let a = tape.attention(qkv, spec.clone());
            let a = self.lin(tape, params, a, blk.proj);
            let a = drop(tape, a, c.dropout, &mut dropout_rng);
            x = tape.add(x, a);
            let h = self.ln(tape, params, x, blk.ln2);
            let h = self.lin(tape, params, h, blk.fc);
            let h = tape.gelu(h);
            let h = self.lin(tape, params, h, blk.out);
            let h = drop(tape, h, c.dropout, &mut dropout_rng);
            x = tape.add(x, h);
        }
        let x = self.ln(tape, params, x, self.ln_f);
        self.lin(tape, params, x, self.head)
    }

    fn lin(&self, tape: &mut Tape, params: &ParamStore, x: Var, (w, b): (ParamId, ParamId)) -> Var {
        let w = tape.param(params, w);
        let b = tape.param(params, b);
        tape.linear(x, w, b)
    }

    fn ln(&self, tape: &mut Tape, params: &ParamStore, x: Var, (g, b): (ParamId, ParamId)) -> Var {
        let g = tape.param(params, g);
        let b = tape.param(params, b);
        tape.layer_norm(x, g, b)
    }

    fn check(&self, ex: &Example) -> Result<()> {
        let len = ex.source.len() + ex.target.len();
        if len > self.config.context {
            return Err(Error::ContextOverflow { len, context: self.config.context });
        }
        if ex.source.is_empty() || ex.target.is_empty() {
            return Err(Error::Shape("source and target must be non-empty".into()));
        }
        if let Some(&bad) = ex.source.iter().chain(&ex.target).find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::Index { index: bad, size: self.config.vocab_size });
        }
        Ok(())
    }

    /// Builds the mean target NLL of a batch on the tape.
    pub(crate) fn loss_graph(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        batch: &[Example],
        dropout_rng: Option<&mut dyn rand::RngCore>,
    ) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        for ex in batch {
            self.check(ex)?;
        }
        let t = batch.iter().map(|e| e.source.len() + e.target.len() - 1).max().unwrap_or(1);
        let mut seqs = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len() * t);
        let mut prefix = Vec::with_capacity(batch.len());
        for ex in batch {
            let full: Vec<usize> = ex.source.iter().chain(&ex.target).copied().collect();
            let mut input = full[..full.len() - 1].to_vec();
            for i in 0..t {
                targets.push(if i + 1 >= ex.source.len() && i + 1 < full.len() { Some(full[i + 1]) } else { None });
            }
            input.resize(t, PAD);
            seqs.push(input);
            prefix.push(ex.source.len());
        }
        let logits = self.forward(tape, params, &seqs, &prefix, dropout_rng);
        Ok(tape.cross_entropy(logits, &targets))
    }

    /// Mean negative log-likelihood of `target` given the fully visible `source`.
    pub fn lm_loss(&self, source: &[usize], target: &[usize]) -> Result<f64> {
        self.batch_loss(&[Example { source: source.to_vec(), target: target.to_vec() }])
    }

    /// Mean target-token NLL over a batch (tokens pooled across examples).
    pub fn batch_loss(&self, batch: &[Example]) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.loss_graph(&mut tape, &self.params, batch, None)?;
        Ok(tape.scalar(loss))
    }

    /// Loss and gradients for `params` (same layout as `self.params`), dropout disabled.
    pub fn loss_and_grads(&self, params: &ParamStore, batch: &[Example]) -> Result<(f64, Grads)> {
        let mut tape = Tape::new();
        let loss = self.loss_graph(&mut tape, params, batch, None)?;
        Ok((tape.scalar(loss), tape.backward(loss, params.len())))
    }

    /// Logits for every position of one sequence whose first `prefix` tokens are fully visible.
    pub fn logits(&self, seq: &[usize], prefix: usize) -> Result<Array2<f64>> {
        if seq.is_empty() || seq.len() > self.config.context {
            return Err(Error::ContextOverflow { len: seq.len(), context: self.config.context });
        }
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, &self.params, &[seq.to_vec()], &[prefix.min(seq.len())], None);
        Ok(tape.value(out).clone())
    }

    /// Next-token distribution after `source ++ generated`.
    pub fn next_token_probs(&self, source: &[usize], generated: &[usize]) -> Result<Vec<f64>> {
        let seq: Vec<usize> = source.iter().chain(generated).copied().collect();
        let logits = self.logits(&seq, source.len())?;
        let last = logits.slice(ndarray::s![logits.nrows() - 1..logits.nrows(), ..]);
        Ok(softmax_rows(last).row(0).to_vec())
    }
}

fn drop(tape: &mut Tape, x: Var, rate: f64, rng: &mut Option<&mut dyn rand::RngCore>) -> Var {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let shape = tape.value(x).raw_dim();
            let mask = Array2::from_shape_simple_fn(shape, || if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
            tape.dropout(x, mask)
        }
        _ => x,
    }
}
