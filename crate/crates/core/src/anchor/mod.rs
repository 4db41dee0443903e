//! Scene grounding: pick the best-matching posed image for a prompt, then refine its camera.

pub mod jet;
mod provider;
mod refine;
mod render;
mod scene;

pub use provider::{EmbeddingProvider, FileProvider, RemoteProvider, SyntheticProvider};
pub use refine::{
    determine_anchor, grounding_score, refine_anchor, refine_camera, select_initial_anchor, select_with_text_embedding, AnchorResult,
    CameraObjective, GroundingObjective, QuadraticObjective, RefineConfig, Refinement, DEFAULT_LR,
};
pub use render::{camera_params, render_params, toy_render, toy_render_jet, Raster, RASTER_SIZE};
pub use scene::{load_scene_dir, normalize, Blob, Bounds, Scene, SceneImage, SceneSummary};
