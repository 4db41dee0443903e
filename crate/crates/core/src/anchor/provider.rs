use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::render::{Raster, RASTER_SIZE};
use super::scene::normalize;
use crate::dataset::words;
use crate::error::{Error, Result};

/// Maps text and rendered images into a shared unit-norm embedding space.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Vec<f64>>;
    fn embed_image(&self, raster: &Raster) -> Result<Vec<f64>>;
    fn differentiable(&self) -> bool {
        false
    }
    /// Gradient of `upstream · embed_image(raster)` with respect to the raster values.
    fn embed_image_vjp(&self, _raster: &Raster, _upstream: &[f64]) -> Result<Vec<f64>> {
        Err(Error::NotDifferentiable)
    }
}

const STOPWORDS: [&str; 12] = ["the", "a", "an", "of", "to", "at", "on", "in", "above", "near", "by", "from"];

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic provider for tests and offline use: hashed bag-of-words text vectors and a
/// fixed random linear projection of the raster, both normalized.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    dim: usize,
    seed: u64,
    projection: Array2<f64>,
    overrides: BTreeMap<String, Vec<f64>>,
}

impl SyntheticProvider {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a6e);
        let cols = RASTER_SIZE * RASTER_SIZE * 3;
        let projection = Array2::from_shape_simple_fn((dim, cols), || StandardNormal.sample(&mut rng));
        Self { dim, seed, projection, overrides: BTreeMap::new() }
    }

    /// Pins the embedding of one prompt (compared after lowercasing and trimming).
    pub fn with_text(mut self, prompt: &str, vector: &[f64]) -> Result<Self> {
        if vector.len() != self.dim {
            return Err(Error::Config(format!("override has {} dims, provider has {}", vector.len(), self.dim)));
        }
        self.overrides.insert(prompt.trim().to_lowercase(), normalize(vector)?);
        Ok(self)
    }

    fn word_vector(&self, w: &str) -> Array1<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(w) ^ self.seed);
        Array1::from_shape_simple_fn(self.dim, || StandardNormal.sample(&mut rng))
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.overrides.get(&text.trim().to_lowercase()) {
            return Ok(v.clone());
        }
        let ws: Vec<String> = words(text).into_iter().filter(|w| !STOPWORDS.contains(&w.as_str())).collect();
        if ws.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut sum = Array1::zeros(self.dim);
        for w in &ws {
            sum += &self.word_vector(w);
        }
        normalize(sum.as_slice().expect("contiguous"))
    }

    fn embed_image(&self, raster: &Raster) -> Result<Vec<f64>> {
        self.check_raster(raster)?;
        let raw = self.projection.dot(&Array1::from(raster.data.clone()));
        normalize(raw.as_slice().expect("contiguous"))
    }

    fn differentiable(&self) -> bool {
        true
    }

    fn embed_image_vjp(&self, raster: &Raster, upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_raster(raster)?;
        let raw = self.projection.dot(&Array1::from(raster.data.clone()));
        let n = raw.dot(&raw).sqrt();
        if !(n > 0.0) {
            return Err(Error::EmbeddingUnavailable("blank render has no embedding".into()));
        }
        let e = &raw / n;
        let g = Array1::from(upstream.to_vec());
        // d(raw/|raw|) = (I − e eᵀ)/|raw|
        let g_raw = (&g - &(&e * e.dot(&g))) / n;
        Ok(self.projection.t().dot(&g_raw).to_vec())
    }
}

impl SyntheticProvider {
    fn check_raster(&self, raster: &Raster) -> Result<()> {
        if raster.data.len() != self.projection.ncols() {
            return Err(Error::Shape(format!("raster has {} values, provider expects {}", raster.data.len(), self.projection.ncols())));
        }
        Ok(())
    }
}

/// Precomputed text embeddings loaded from JSON `{"dim": E, "text": {prompt: [..]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileProvider {
    pub dim: usize,
    pub text: BTreeMap<String, Vec<f64>>,
}

impl FileProvider {
    pub fn load(path: &Path) -> Result<Self> {
        let p: FileProvider = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let text = p
            .text
            .into_iter()
            .map(|(k, v)| {
                if v.len() != p.dim {
                    return Err(Error::Config(format!("embedding for {k:?} has wrong dimension")));
                }
                Ok((k.trim().to_lowercase(), normalize(&v)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { dim: p.dim, text })
    }
}

impl EmbeddingProvider for FileProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.text
            .get(&text.trim().to_lowercase())
            .cloned()
            .ok_or_else(|| Error::EmbeddingUnavailable(format!("no precomputed embedding for {text:?}")))
    }

    fn embed_image(&self, _raster: &Raster) -> Result<Vec<f64>> {
        Err(Error::EmbeddingUnavailable("file provider only stores text embeddings; store image embeddings in the scene".into()))
    }
}

/// Client for a remote service: `POST {endpoint}/embed {"kind", "payload"} → {"vector"}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteProvider {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub dim: usize,
}

#[derive(Deserialize)]
struct RemoteVector {
    vector: Vec<f64>,
}

impl RemoteProvider {
    pub const ENDPOINT_VAR: &'static str = "CHATCAM_EMBED_URL";
    pub const KEY_VAR: &'static str = "CHATCAM_EMBED_KEY";

    /// Reads endpoint and key from the environment; `None` when no endpoint is configured.
    pub fn from_env(dim: usize) -> Option<Self> {
        let endpoint = std::env::var(Self::ENDPOINT_VAR).ok().filter(|s| !s.is_empty())?;
        Some(Self { endpoint, api_key: std::env::var(Self::KEY_VAR).ok(), dim })
    }

    fn call(&self, body: serde_json::Value) -> Result<Vec<f64>> {
        let url = format!("{}/embed", self.endpoint.trim_end_matches('/'));
        let mut req = ureq::post(&url);
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let unavailable = |e: ureq::Error| Error::EmbeddingUnavailable(format!("{url}: {e}"));
        let out: RemoteVector = req.send_json(body).map_err(unavailable)?.body_mut().read_json().map_err(unavailable)?;
        if out.vector.len() != self.dim {
            return Err(Error::EmbeddingUnavailable(format!("service returned {} dims, expected {}", out.vector.len(), self.dim)));
        }
        normalize(&out.vector)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f64>> {
        self.call(serde_json::json!({ "kind": "text", "payload": text }))
    }

    fn embed_image(&self, raster: &Raster) -> Result<Vec<f64>> {
        self.call(serde_json::json!({
            "kind": "image",
            "payload": { "width": raster.width, "height": raster.height, "data": raster.data },
        }))
    }
}
