use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::jet::CAMERA_PARAMS;
use super::provider::EmbeddingProvider;
use super::render::{camera_params, toy_render, toy_render_jet, RASTER_SIZE};
use super::scene::Scene;
use crate::camera::{CameraFrame, Rot6D};
use crate::error::{Error, Result};

/// Default step size for anchor refinement.
pub const DEFAULT_LR: f64 = 0.002;
const MIN_FOCAL: f64 = 1e-3;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResult {
    pub camera: CameraFrame,
    /// Cosine similarity between the prompt and the (rendered or stored) image embedding.
    pub score: f64,
    pub source_image_id: String,
    pub refinement_steps: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Best-matching image for a text embedding; ties go to the lowest image index.
/// Images without a stored embedding are rendered and embedded with `provider`.
pub fn select_with_text_embedding(
    scene: &Scene,
    text: &[f64],
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<(usize, f64)> {
    if scene.images.is_empty() {
        return Err(Error::EmptyScene);
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, img) in scene.images.iter().enumerate() {
        let emb = match &img.embedding {
            Some(e) => e.clone(),
            None => {
                let p = provider.ok_or_else(|| Error::EmbeddingUnavailable(format!("image {} has no embedding", img.id)))?;
                p.embed_image(&toy_render(&scene.content, &img.camera, RASTER_SIZE))?
            }
        };
        if emb.len() != text.len() {
            return Err(Error::Shape(format!("image embedding dim {} vs text dim {}", emb.len(), text.len())));
        }
        let s = cosine(&emb, text);
        if !s.is_finite() {
            return Err(Error::EmbeddingUnavailable(format!("degenerate embedding for image {}", img.id)));
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    Ok(best.expect("non-empty scene"))
}

fn bounds_warnings(scene: &Scene, camera: &CameraFrame) -> Vec<String> {
    if scene.bounds.contains(&camera.trans) {
        Vec::new()
    } else {
        vec![format!("anchor camera {:?} lies outside the scene bounds", camera.trans.as_slice())]
    }
}

/// Picks the scene image whose embedding best matches `prompt`.
pub fn select_initial_anchor(scene: &Scene, provider: &dyn EmbeddingProvider, prompt: &str) -> Result<AnchorResult> {
    let text = provider.embed_text(prompt)?;
    let (i, score) = select_with_text_embedding(scene, &text, Some(provider))?;
    let img = &scene.images[i];
    Ok(AnchorResult {
        camera: img.camera,
        score,
        source_image_id: img.id.clone(),
        refinement_steps: 0,
        warnings: bounds_warnings(scene, &img.camera),
    })
}

/// A scalar objective over camera parameters with its gradient.
pub trait CameraObjective {
    fn loss(&self, camera: &CameraFrame) -> Result<f64>;
    /// Loss and gradient with respect to `[rot6d(6), trans(3), focal]`.
    fn loss_and_gradient(&self, camera: &CameraFrame) -> Result<(f64, [f64; CAMERA_PARAMS])>;
}

/// Negative cosine between the prompt embedding and the embedding of the rendered view.
pub struct GroundingObjective<'a> {
    pub scene: &'a Scene,
    pub provider: &'a dyn EmbeddingProvider,
    text: Vec<f64>,
}

impl<'a> GroundingObjective<'a> {
    pub fn new(scene: &'a Scene, provider: &'a dyn EmbeddingProvider, prompt: &str) -> Result<Self> {
        if !provider.differentiable() {
            return Err(Error::NotDifferentiable);
        }
        if scene.content.is_empty() {
            return Err(Error::Config(format!("scene {} has no renderable content", scene.id)));
        }
        Ok(Self { scene, provider, text: provider.embed_text(prompt)? })
    }
}

impl CameraObjective for GroundingObjective<'_> {
    fn loss(&self, camera: &CameraFrame) -> Result<f64> {
        let e = self.provider.embed_image(&toy_render(&self.scene.content, camera, RASTER_SIZE))?;
        Ok(-cosine(&e, &self.text))
    }

    fn loss_and_gradient(&self, camera: &CameraFrame) -> Result<(f64, [f64; CAMERA_PARAMS])> {
        let jr = toy_render_jet(&self.scene.content, camera, RASTER_SIZE);
        let raster = jr.values();
        let e = self.provider.embed_image(&raster)?;
        let t_norm = self.text.iter().map(|x| x * x).sum::<f64>().sqrt();
        // e is unit-norm, so −cos = −e·t̂ and ∂/∂e = −t̂
        let upstream: Vec<f64> = self.text.iter().map(|t| -t / t_norm).collect();
        let loss: f64 = e.iter().zip(&upstream).map(|(a, b)| a * b).sum();
        let g_raster = self.provider.embed_image_vjp(&raster, &upstream)?;
        let mut grad = [0.0; CAMERA_PARAMS];
        for (px, g) in jr.data.iter().zip(&g_raster) {
            for k in 0..CAMERA_PARAMS {
                grad[k] += g * px.d[k];
            }
        }
        Ok((loss, grad))
    }
}

/// `stiffness · |c − c*|²` over the raw camera parameters; the minimizer is `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub target: CameraFrame,
    pub stiffness: f64,
}

impl CameraObjective for QuadraticObjective {
    fn loss(&self, camera: &CameraFrame) -> Result<f64> {
        Ok(self.loss_and_gradient(camera)?.0)
    }

    fn loss_and_gradient(&self, camera: &CameraFrame) -> Result<(f64, [f64; CAMERA_PARAMS])> {
        let (c, t) = (camera_params(camera), camera_params(&self.target));
        let mut grad = [0.0; CAMERA_PARAMS];
        let mut loss = 0.0;
        for k in 0..CAMERA_PARAMS {
            let d = c[k] - t[k];
            loss += self.stiffness * d * d;
            grad[k] = 2.0 * self.stiffness * d;
        }
        Ok((loss, grad))
    }
}

/// Options for gradient refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub lr: f64,
    pub max_steps: usize,
    /// Stop once an accepted step changes the loss by less than this.
    pub tolerance: f64,
    pub optimize_focal: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { lr: DEFAULT_LR, max_steps: 1000, tolerance: 1e-7, optimize_focal: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub camera: CameraFrame,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
    /// Loss after every accepted step, starting with the initial loss.
    pub losses: Vec<f64>,
}

fn apply_step(c: &CameraFrame, grad: &[f64; CAMERA_PARAMS], eta: f64) -> Option<CameraFrame> {
    let mut p = camera_params(c);
    for k in 0..CAMERA_PARAMS {
        p[k] -= eta * grad[k];
    }
    // re-orthonormalize so the iterate stays a valid rotation
    let rot = Rot6D::from_slice(&p[..6]).normalized().ok()?;
    Some(CameraFrame { rot, trans: Vector3::new(p[6], p[7], p[8]), focal: p[9].max(MIN_FOCAL) })
}

/// Gradient descent `c ← c − η∇L` with step halving whenever the loss would increase.
pub fn refine_camera(objective: &dyn CameraObjective, init: &CameraFrame, config: &RefineConfig) -> Result<Refinement> {
    if !(config.lr > 0.0) {
        return Err(Error::Config("refinement learning rate must be positive".into()));
    }
    init.validate()?;
    let mut camera = CameraFrame { rot: init.rot.normalized()?, ..*init };
    let mut loss = objective.loss(&camera)?;
    let initial_loss = loss;
    let mut losses = vec![loss];
    let mut steps = 0;
    while steps < config.max_steps {
        let (_, mut grad) = objective.loss_and_gradient(&camera)?;
        if !config.optimize_focal {
            grad[9] = 0.0;
        }
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut eta = config.lr;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            if let Some(c) = apply_step(&camera, &grad, eta) {
                let l = objective.loss(&c)?;
                if l <= loss {
                    accepted = Some((c, l));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((c, l)) = accepted else { break };
        let delta = (loss - l).abs();
        camera = c;
        loss = l;
        losses.push(l);
        steps += 1;
        if delta < config.tolerance {
            break;
        }
    }
    Ok(Refinement { camera, initial_loss, final_loss: loss, steps, losses })
}

/// Refines `init` to better match `prompt` in the rendered scene.
pub fn refine_anchor(
    scene: &Scene,
    provider: &dyn EmbeddingProvider,
    prompt: &str,
    init: &CameraFrame,
    config: &RefineConfig,
) -> Result<AnchorResult> {
    let objective = GroundingObjective::new(scene, provider, prompt)?;
    let r = refine_camera(&objective, init, config)?;
    Ok(AnchorResult {
        camera: r.camera,
        score: -r.final_loss,
        source_image_id: String::new(),
        refinement_steps: r.steps,
        warnings: bounds_warnings(scene, &r.camera),
    })
}

/// Negative cosine between the prompt and the render from `camera`.
pub fn grounding_score(scene: &Scene, provider: &dyn EmbeddingProvider, prompt: &str, camera: &CameraFrame) -> Result<f64> {
    GroundingObjective::new(scene, provider, prompt)?.loss(camera)
}

/// Selection followed by refinement when the provider and scene allow it.
pub fn determine_anchor(
    scene: &Scene,
    provider: &dyn EmbeddingProvider,
    prompt: &str,
    refine: Option<&RefineConfig>,
) -> Result<AnchorResult> {
    let initial = select_initial_anchor(scene, provider, prompt)?;
    let Some(config) = refine else { return Ok(initial) };
    if !provider.differentiable() || scene.content.is_empty() {
        let mut r = initial;
        r.warnings.push("refinement skipped: provider or scene does not support rendering gradients".into());
        return Ok(r);
    }
    let mut refined = refine_anchor(scene, provider, prompt, &initial.camera, config)?;
    refined.source_image_id = initial.source_image_id;
    Ok(refined)
}
