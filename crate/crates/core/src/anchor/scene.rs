use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::CameraFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub radius: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn contains(&self, p: &nalgebra::Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Box around a set of points, padded by `margin`.
    pub fn around(points: impl IntoIterator<Item = [f64; 3]>, margin: f64) -> Self {
        let mut b = Bounds { min: [f64::INFINITY; 3], max: [f64::NEG_INFINITY; 3] };
        for p in points {
            for i in 0..3 {
                b.min[i] = b.min[i].min(p[i] - margin);
                b.max[i] = b.max[i].max(p[i] + margin);
            }
        }
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneImage {
    pub id: String,
    pub camera: CameraFrame,
    /// Unit-norm image embedding; `None` means it is computed on demand from a render.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub embedding_dim: usize,
    pub images: Vec<SceneImage>,
    #[serde(default)]
    pub content: Vec<Blob>,
    pub bounds: Bounds,
}

#[derive(Deserialize)]
struct ManifestImage {
    id: String,
    camera: CameraFrame,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
    #[serde(default)]
    embedding_file: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    id: Option<String>,
    embedding_dim: usize,
    images: Vec<ManifestImage>,
    #[serde(default)]
    content: Vec<Blob>,
    bounds: Bounds,
}

/// Scales `v` to unit length; zero or non-finite vectors are rejected.
pub fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::EmbeddingUnavailable("zero or non-finite embedding".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

impl Scene {
    /// Parses a manifest; `embedding_file` paths resolve against `base_dir`.
    pub fn from_manifest(json: &str, default_id: &str, base_dir: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(json)?;
        let mut images = Vec::with_capacity(m.images.len());
        for img in m.images {
            let raw = match (img.embedding, img.embedding_file) {
                (Some(v), _) => Some(v),
                (None, Some(file)) => {
                    let text = std::fs::read_to_string(base_dir.join(&file))?;
                    Some(serde_json::from_str::<Vec<f64>>(&text)?)
                }
                (None, None) => None,
            };
            let embedding = match raw {
                Some(v) if v.len() != m.embedding_dim => {
                    return Err(Error::Config(format!("image {} embedding has {} dims, expected {}", img.id, v.len(), m.embedding_dim)))
                }
                Some(v) => Some(normalize(&v)?),
                None => None,
            };
            img.camera.validate()?;
            images.push(SceneImage { id: img.id, camera: img.camera, embedding });
        }
        let scene = Scene {
            id: m.id.unwrap_or_else(|| default_id.to_owned()),
            embedding_dim: m.embedding_dim,
            images,
            content: m.content,
            bounds: m.bounds,
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Loads `<dir>/<id>.json`; the id defaults to the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
        Self::from_manifest(&text, stem, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::EmptyScene);
        }
        for img in &self.images {
            if let Some(e) = &img.embedding {
                let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-6 || e.len() != self.embedding_dim {
                    return Err(Error::Config(format!("image {} embedding must be unit-norm of dim {}", img.id, self.embedding_dim)));
                }
            }
        }
        for b in &self.content {
            if !(b.radius > 0.0) {
                return Err(Error::Config("blob radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

/// Summary used by scene listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub image_count: usize,
    pub bounds: Bounds,
}

/// Loads every `*.json` manifest in `dir`, sorted by id. Invalid manifests are skipped with a warning.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for p in paths {
        match Scene::load(&p) {
            Ok(s) => scenes.push(s),
            Err(e) => tracing::warn!(path = %p.display(), error = %e, "skipping invalid scene manifest"),
        }
    }
    scenes.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(scenes)
}
