use ndarray::{s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::codebook::{nearest_ids, quantize, Codebook, TrajTokenSeq};
use crate::camera::{resample, CameraFrame, Rot6D, Trajectory, CANONICAL_FOCAL};
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{AdamConfig, ConvLayout, Grads, ParamId, ParamStore, Tape, Var};

/// Per-frame features: 6 rotation + 3 translation + 1 log focal.
pub const FEATURES: usize = 10;
/// Temporal downsampling of the encoder (two stride-2 convolutions).
pub const DOWNSAMPLE: usize = 4;
const KERNEL: usize = 3;
pub const CHECKPOINT_KIND: &str = "trajectory-tokenizer";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    /// Frames every trajectory is resampled to; must be a multiple of 4.
    pub frames: usize,
    pub codebook_size: usize,
    pub code_dim: usize,
    pub hidden: usize,
    pub beta: f64,
    /// Steps without use before a code is re-seeded.
    pub dead_code_steps: usize,
    /// Learning-rate multiplier for the codebook relative to the network.
    pub codebook_lr_scale: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamConfig,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            frames: 120,
            codebook_size: 256,
            code_dim: 256,
            hidden: 128,
            beta: 0.25,
            dead_code_steps: 256,
            codebook_lr_scale: 300.0,
            batch_size: 32,
            steps: 2000,
            adam: AdamConfig::default(),
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.frames % DOWNSAMPLE != 0 {
            return Err(Error::Config(format!("frames must be a positive multiple of {DOWNSAMPLE}")));
        }
        if self.codebook_size < 2 || self.code_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("codebook_size ≥ 2, code_dim and hidden > 0 required".into()));
        }
        Ok(())
    }
}

/// Feature scaling fitted on the training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub trans_scale: f64,
    pub focal_ref: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self { trans_scale: 1.0, focal_ref: CANONICAL_FOCAL }
    }
}

impl Normalizer {
    /// Translation scale is the RMS translation coordinate over the corpus.
    pub fn fit<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let (mut sum, mut n) = (0.0, 0usize);
        for t in trajs {
            for f in t.frames() {
                sum += f.trans.norm_squared();
                n += 3;
            }
        }
        let rms = if n > 0 { (sum / n as f64).sqrt() } else { 0.0 };
        Self { trans_scale: if rms > 1e-6 { rms } else { 1.0 }, focal_ref: CANONICAL_FOCAL }
    }

    pub fn features(&self, traj: &Trajectory) -> Array2<f64> {
        let mut x = Array2::zeros((traj.len(), FEATURES));
        for (i, f) in traj.frames().iter().enumerate() {
            let r = f.rot.normalized().expect("valid frame");
            let row = [
                r.a.x, r.a.y, r.a.z, r.b.x, r.b.y, r.b.z,
                f.trans.x / self.trans_scale, f.trans.y / self.trans_scale, f.trans.z / self.trans_scale,
                (f.focal / self.focal_ref).ln(),
            ];
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        }
        x
    }

    /// Inverse of `features`; rotation columns are re-orthonormalized.
    pub fn frames(&self, x: &Array2<f64>) -> Vec<CameraFrame> {
        x.rows()
            .into_iter()
            .map(|r| {
                let rot = Rot6D::from_slice(&[r[0], r[1], r[2], r[3], r[4], r[5]])
                    .normalized()
                    .unwrap_or_else(|_| Rot6D::identity());
                let trans = nalgebra::Vector3::new(r[6], r[7], r[8]) * self.trans_scale;
                let focal = self.focal_ref * r[9].clamp(-20.0, 20.0).exp();
                CameraFrame { rot, trans, focal }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct NetIds {
    enc: [Layer; 3],
    dec: [Layer; 4],
    dur: Layer,
    pub(crate) codebook: ParamId,
}

/// Loss components for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenizerLoss {
    pub recon: f64,
    /// Reconstruction error restricted to the translation features (normalized units).
    pub recon_translation: f64,
    pub embed: f64,
    pub commit: f64,
    pub total: f64,
}

/// Values held constant by stop-gradients, captured at the point of evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StopGradients {
    pub ids: Vec<usize>,
    pub encoded: Array2<f64>,
    pub quantized: Array2<f64>,
}

/// Convolutional VQ-VAE over per-frame camera features.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerModel {
    pub config: TokenizerConfig,
    pub norm: Normalizer,
    pub params: ParamStore,
    ids: NetIds,
}

fn conv_layer(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Layer {
    let std = 1.0 / ((KERNEL * c_in) as f64).sqrt();
    Layer { w: store.normal(format!("{name}.w"), KERNEL * c_in, c_out, std, rng), b: store.zeros(format!("{name}.b"), 1, c_out) }
}

impl TokenizerModel {
    pub fn new(config: TokenizerConfig, norm: Normalizer, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (h, d) = (config.hidden, config.code_dim);
        let mut p = ParamStore::new();
        let enc = [
            conv_layer(&mut p, "enc1", FEATURES, h, rng),
            conv_layer(&mut p, "enc2", h, h, rng),
            conv_layer(&mut p, "enc3", h, d, rng),
        ];
        let dec = [
            conv_layer(&mut p, "dec1", d, h, rng),
            conv_layer(&mut p, "dec2", h, h, rng),
            conv_layer(&mut p, "dec3", h, h, rng),
            conv_layer(&mut p, "dec4", h, FEATURES, rng),
        ];
        let dur = Layer { w: p.normal("dur.w", d, 1, 1.0 / (d as f64).sqrt(), rng), b: p.zeros("dur.b", 1, 1) };
        let codebook = p.normal("codebook", config.codebook_size, d, 1.0, rng);
        Ok(Self { config, norm, params: p, ids: NetIds { enc, dec, dur, codebook } })
    }

    fn lookup(params: &ParamStore) -> Result<NetIds> {
        let get = |n: &str| params.find(n).ok_or_else(|| Error::Checkpoint(format!("missing tensor {n}")));
        let layer = |n: &str| -> Result<Layer> { Ok(Layer { w: get(&format!("{n}.w"))?, b: get(&format!("{n}.b"))? }) };
        Ok(NetIds {
            enc: [layer("enc1")?, layer("enc2")?, layer("enc3")?],
            dec: [layer("dec1")?, layer("dec2")?, layer("dec3")?, layer("dec4")?],
            dur: layer("dur")?,
            codebook: get("codebook")?,
        })
    }

    pub(crate) fn net_ids(&self) -> NetIds {
        self.ids
    }

    pub fn codebook(&self) -> Codebook {
        Codebook::new(self.params.get(self.ids.codebook).clone()).expect("finite codebook")
    }

    pub fn codebook_size(&self) -> usize {
        self.config.codebook_size
    }

    /// Resamples to the configured frame count when needed.
    pub fn prepare(&self, traj: &Trajectory) -> Result<Trajectory> {
        if traj.len() == self.config.frames {
            Ok(traj.clone())
        } else {
            resample(traj, self.config.frames)
        }
    }

    fn conv(&self, tape: &mut Tape, params: &ParamStore, x: Var, layer: Layer, batch: usize, t_in: usize, stride: usize) -> Var {
        let channels = tape.value(x).ncols();
        let w = tape.param(params, layer.w);
        let b = tape.param(params, layer.b);
        tape.conv1d(x, w, b, ConvLayout { batch, t_in, channels, kernel: KERNEL, stride, pad: 1 })
    }

    pub(crate) fn encode_graph(&self, tape: &mut Tape, params: &ParamStore, x: Var, batch: usize, frames: usize) -> Var {
        let [e1, e2, e3] = self.ids.enc;
        let h = self.conv(tape, params, x, e1, batch, frames, 2);
        let h = tape.gelu(h);
        let h = self.conv(tape, params, h, e2, batch, frames / 2, 2);
        let h = tape.gelu(h);
        self.conv(tape, params, h, e3, batch, frames / DOWNSAMPLE, 1)
    }

    /// Returns (features `batch·4L × 10`, log-duration `batch × 1`).
    pub(crate) fn decode_graph(&self, tape: &mut Tape, params: &ParamStore, z: Var, batch: usize, tokens: usize) -> (Var, Var) {
        let [d1, d2, d3, d4] = self.ids.dec;
        let h = self.conv(tape, params, z, d1, batch, tokens, 1);
        let h = tape.gelu(h);
        let h = tape.upsample(h, batch, tokens, 2);
        let h = self.conv(tape, params, h, d2, batch, 2 * tokens, 1);
        let h = tape.gelu(h);
        let h = tape.upsample(h, batch, 2 * tokens, 2);
        let h = self.conv(tape, params, h, d3, batch, 4 * tokens, 1);
        let h = tape.gelu(h);
        let x = self.conv(tape, params, h, d4, batch, 4 * tokens, 1);
        let pooled = tape.segment_mean(z, batch, tokens);
        let w = tape.param(params, self.ids.dur.w);
        let b = tape.param(params, self.ids.dur.b);
        let dur = tape.linear(pooled, w, b);
        (x, dur)
    }

    fn check_frames(&self, m: usize) -> Result<()> {
        if m % DOWNSAMPLE != 0 || m == 0 {
            return Err(Error::Shape(format!("frame count {m} is not divisible by {DOWNSAMPLE}; resample first")));
        }
        Ok(())
    }

    /// Continuous latent, `M/4 × d`.
    pub fn encode(&self, traj: &Trajectory) -> Result<Array2<f64>> {
        self.check_frames(traj.len())?;
        let mut tape = Tape::new();
        let x = tape.input(self.norm.features(traj));
        let z = self.encode_graph(&mut tape, &self.params, x, 1, traj.len());
        Ok(tape.value(z).clone())
    }

    pub fn quantize(&self, latent: &Array2<f64>) -> Result<(Vec<usize>, Array2<f64>)> {
        quantize(&self.codebook(), latent)
    }

    /// Resamples, encodes and quantizes.
    pub fn tokenize(&self, traj: &Trajectory) -> Result<TrajTokenSeq> {
        let t = self.prepare(traj)?;
        let (ids, _) = self.quantize(&self.encode(&t)?)?;
        Ok(TrajTokenSeq { ids, duration_s: traj.duration_s() })
    }

    /// Decodes token ids to `4·len` frames. `duration_s` overrides the duration head when given.
    pub fn decode(&self, ids: &[usize], duration_s: Option<f64>) -> Result<Trajectory> {
        if ids.is_empty() {
            return Err(Error::Shape("cannot decode an empty token sequence".into()));
        }
        let cb = self.params.get(self.ids.codebook);
        let mut tape = Tape::new();
        let table = tape.input(cb.clone());
        if let Some(&bad) = ids.iter().find(|&&i| i >= cb.nrows()) {
            return Err(Error::Index { index: bad, size: cb.nrows() });
        }
        let z = tape.gather(table, ids);
        let (x, dur) = self.decode_graph(&mut tape, &self.params, z, 1, ids.len());
        let frames = self.norm.frames(tape.value(x));
        let duration = duration_s.unwrap_or_else(|| tape.scalar(dur).clamp(-10.0, 10.0).exp());
        Trajectory::new(frames, duration)
    }

    /// Builds the loss on the tape. Stop-gradient values come from `frozen` when given,
    /// otherwise from the current parameters (the usual training path).
    pub(crate) fn loss_graph(
        &self,
        tape: &mut Tape,
        params: &ParamStore,
        batch: &[Trajectory],
        frozen: Option<&StopGradients>,
    ) -> Result<(Var, TokenizerLoss, StopGradients)> {
        let m = batch.first().ok_or_else(|| Error::Config("empty batch".into()))?.len();
        self.check_frames(m)?;
        if batch.iter().any(|t| t.len() != m) {
            return Err(Error::Shape("batch trajectories must share a frame count".into()));
        }
        let b = batch.len();
        let tokens = m / DOWNSAMPLE;
        let mut feats = Array2::zeros((b * m, FEATURES));
        let mut log_dur = Array2::zeros((b, 1));
        for (i, t) in batch.iter().enumerate() {
            feats.slice_mut(s![i * m..(i + 1) * m, ..]).assign(&self.norm.features(t));
            log_dur[[i, 0]] = t.duration_s().ln();
        }
        let x = tape.input(feats.clone());
        let z_e = self.encode_graph(tape, params, x, b, m);
        let sg = match frozen {
            Some(f) => f.clone(),
            None => {
                let enc = tape.value(z_e).clone();
                let cb = params.get(self.ids.codebook);
                let ids = nearest_ids(&cb.view(), &enc.view());
                let mut q = Array2::zeros(enc.raw_dim());
                for (r, &k) in ids.iter().enumerate() {
                    q.row_mut(r).assign(&cb.row(k));
                }
                StopGradients { ids, encoded: enc, quantized: q }
            }
        };
        let rows = (b * tokens) as f64;
        // straight-through: forward uses the codes, backward passes to the encoder
        let offset = tape.input(&sg.quantized - &sg.encoded);
        let z_st = tape.add(z_e, offset);
        let (x_hat, dur) = self.decode_graph(tape, params, z_st, b, tokens);
        let recon_x = tape.squared_error(x_hat, feats.clone(), (b * m * FEATURES) as f64);
        let recon_d = tape.squared_error(dur, log_dur, b as f64);
        let recon = tape.add(recon_x, recon_d);
        let cb = tape.param(params, self.ids.codebook);
        let codes = tape.gather(cb, &sg.ids);
        let embed = tape.squared_error(codes, sg.encoded.clone(), rows);
        let commit = tape.squared_error(z_e, sg.quantized.clone(), rows);
        let commit = tape.scale(commit, self.config.beta);
        let vq = tape.add(embed, commit);
        let total = tape.add(recon, vq);

        let xh = tape.value(x_hat);
        let trans_err = (&xh.slice(s![.., 6..9]) - &feats.slice(s![.., 6..9])).mapv(|v| v * v).sum_axis(Axis(1)).mean().unwrap_or(0.0);
        let parts = TokenizerLoss {
            recon: tape.scalar(recon),
            recon_translation: trans_err,
            embed: tape.scalar(embed),
            commit: tape.scalar(commit),
            total: tape.scalar(total),
        };
        Ok((total, parts, sg))
    }

    /// Stop-gradient values (codes, encoder output, quantized output) at the current parameters.
    pub fn stop_gradients(&self, batch: &[Trajectory]) -> Result<StopGradients> {
        let mut tape = Tape::new();
        Ok(self.loss_graph(&mut tape, &self.params, batch, None)?.2)
    }

    /// Loss and parameter gradients for `params` (same layout as `self.params`).
    /// With `frozen`, stop-gradient values are held fixed, which makes the loss a smooth
    /// function of `params` suitable for finite-difference checks.
    pub fn loss_and_grads(
        &self,
        params: &ParamStore,
        batch: &[Trajectory],
        frozen: Option<&StopGradients>,
    ) -> Result<(TokenizerLoss, Grads)> {
        let mut tape = Tape::new();
        let (loss, parts, _) = self.loss_graph(&mut tape, params, batch, frozen)?;
        Ok((parts, tape.backward(loss, params.len())))
    }

    /// Loss terms on a batch of equal-length trajectories.
    pub fn loss(&self, batch: &[Trajectory]) -> Result<TokenizerLoss> {
        let mut tape = Tape::new();
        Ok(self.loss_graph(&mut tape, &self.params, batch, None)?.1)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            meta: serde_json::json!({ "config": self.config, "norm": self.norm }),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let ck = ck.expect_kind(CHECKPOINT_KIND)?;
        let config: TokenizerConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let norm: Normalizer = serde_json::from_value(ck.meta["norm"].clone())?;
        config.validate()?;
        let ids = Self::lookup(&ck.params)?;
        let model = Self { config, norm, params: ck.params, ids };
        if model.params.get(ids.codebook).dim() != (config.codebook_size, config.code_dim) {
            return Err(Error::Checkpoint("codebook shape does not match config".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

/// Embedding and commitment terms for a given encoder output and its codes:
/// `mean_rows |sg(ẑ) − z|²` and `β · mean_rows |ẑ − sg(z)|²` (equal in value).
pub fn vq_terms(encoded: &Array2<f64>, quantized: &Array2<f64>, beta: f64) -> (f64, f64) {
    let d = (encoded - quantized).mapv(|v| v * v).sum() / encoded.nrows() as f64;
    (d, beta * d)
}
