use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chatcam_core::anchor::{determine_anchor, load_scene_dir, EmbeddingProvider, RefineConfig, Scene, SceneSummary};
use chatcam_core::camera::{CameraPath, Trajectory};
use chatcam_core::gpt::{SamplerParams, SamplingMode};
use chatcam_core::planner::{plan_query, run_pipeline, ChatClient, HttpChatClient, Models, PipelineContext, PipelineOptions, GPT_FILE, TOKENIZER_FILE};
use chatcam_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::ServiceConfig;

const STORE_CAPACITY: usize = 4096;

/// Error body: `{"error": {"code", "message"}}`. Server errors never carry internal details.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        if e.is_user_error() {
            return Self::bad_request(e.code(), e.to_string());
        }
        match e.root() {
            Error::EmbeddingUnavailable(_) | Error::RemotePlannerUnavailable(_) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, e.code(), e.to_string())
            }
            _ => {
                tracing::error!(error = %e, "request failed");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", "internal error")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Content-addressed store of generated trajectories for the export endpoint.
#[derive(Default)]
struct TrajectoryStore {
    items: HashMap<String, Trajectory>,
    order: VecDeque<String>,
}

impl TrajectoryStore {
    fn insert(&mut self, traj: &Trajectory) -> String {
        let id = trajectory_id(traj);
        if !self.items.contains_key(&id) {
            if self.order.len() >= STORE_CAPACITY {
                if let Some(old) = self.order.pop_front() {
                    self.items.remove(&old);
                }
            }
            self.order.push_back(id.clone());
            self.items.insert(id.clone(), traj.clone());
        }
        id
    }
}

/// First 16 hex digits of the SHA-256 of the trajectory JSON.
pub fn trajectory_id(traj: &Trajectory) -> String {
    let digest = Sha256::digest(traj.to_json().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone)]
pub struct AppState {
    models: Option<Arc<Models>>,
    scenes: Arc<BTreeMap<String, Scene>>,
    provider: Arc<dyn EmbeddingProvider>,
    planner: Option<Arc<dyn ChatClient>>,
    refine: RefineConfig,
    default_seed: u64,
    store: Arc<Mutex<TrajectoryStore>>,
}

impl AppState {
    pub fn new(models: Option<Models>, scenes: Vec<Scene>, provider: Box<dyn EmbeddingProvider>, config: &ServiceConfig) -> Self {
        let planner: Option<Arc<dyn ChatClient>> = if config.remote_planner {
            HttpChatClient::from_env().map(|c| Arc::new(c) as Arc<dyn ChatClient>)
        } else {
            None
        };
        Self {
            models: models.map(Arc::new),
            scenes: Arc::new(scenes.into_iter().map(|s| (s.id.clone(), s)).collect()),
            provider: Arc::from(provider),
            planner,
            refine: config.refine,
            default_seed: config.default_seed,
            store: Arc::new(Mutex::new(TrajectoryStore::default())),
        }
    }

    /// Loads models from `model_dir` and scenes from the configured directory. Missing
    /// checkpoints leave the service up but unable to generate; incompatible ones are an error.
    pub fn from_config(config: &ServiceConfig, model_dir: &Path) -> anyhow::Result<Self> {
        let models = if model_dir.join(TOKENIZER_FILE).exists() && model_dir.join(GPT_FILE).exists() {
            Some(Models::load(model_dir)?)
        } else {
            tracing::warn!(dir = %model_dir.display(), "no checkpoints found; generation disabled");
            None
        };
        let scenes = match &config.scene_dir {
            Some(dir) => load_scene_dir(dir)?,
            None => Vec::new(),
        };
        Ok(Self::new(models, scenes, config.embedding.provider()?, config))
    }

    fn scene(&self, id: &str) -> ApiResult<&Scene> {
        self.scenes
            .get(id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "SceneNotFound", format!("no scene with id {id:?}")))
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InternalError", "internal error"))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/scenes", get(scenes))
        .route("/v1/generate", post(generate))
        .route("/v1/plan", post(plan))
        .route("/v1/anchor", post(anchor))
        .route("/v1/trajectory/import", post(import))
        .route("/v1/trajectory/{id}/export", get(export))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": if s.models.is_some() { "ok" } else { "degraded" },
        "models_loaded": s.models.is_some(),
        "scene_count": s.scenes.len(),
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

async fn scenes(State(s): State<AppState>) -> Json<Vec<SceneSummary>> {
    Json(
        s.scenes
            .values()
            .map(|sc| SceneSummary { scene_id: sc.id.clone(), image_count: sc.images.len(), bounds: sc.bounds })
            .collect(),
    )
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_tokens() -> usize {
    SamplerParams::greedy().max_tokens
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplerRequest {
    #[serde(flatten)]
    mode: SamplingMode,
    #[serde(default = "default_temperature")]
    temperature: f64,
    #[serde(default = "default_max_tokens")]
    max_tokens: usize,
}

#[derive(Debug, Deserialize)]
struct GenerateRequest {
    prompt: String,
    #[serde(default)]
    scene_id: Option<String>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    sampler: Option<SamplerRequest>,
    #[serde(default = "yes")]
    refine: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize)]
struct GenerateResponse {
    id: String,
    seed: u64,
    trajectory: Trajectory,
    plan: chatcam_core::planner::Plan,
    trace: chatcam_core::planner::TraceLog,
    warnings: Vec<String>,
}

async fn generate(State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: GenerateRequest = parse_body(&body)?;
    let models = s
        .models
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "ModelsNotLoaded", "models are not loaded"))?;
    if let Some(id) = &req.scene_id {
        s.scene(id)?;
    }
    let seed = req.seed.unwrap_or(s.default_seed);
    let sampler = match &req.sampler {
        Some(r) => SamplerParams { mode: r.mode, temperature: r.temperature, seed, max_tokens: r.max_tokens },
        None => SamplerParams { seed, ..SamplerParams::greedy() },
    };
    sampler.validate().map_err(|e| ApiError::bad_request("InvalidRequest", e.to_string()))?;
    let options = PipelineOptions { sampler, refine: req.refine.then_some(s.refine) };
    let started = Instant::now();
    let state = s.clone();
    let mut out = blocking(move || {
        let ctx = PipelineContext {
            models: &models,
            scene: req.scene_id.as_deref().and_then(|id| state.scenes.get(id)),
            provider: Some(state.provider.as_ref()),
            planner: state.planner.as_deref(),
        };
        Ok(run_pipeline(&req.prompt, ctx, &options)?)
    })
    .await?;
    // timings move to a header so identical requests give identical bodies
    let timing = format!("total;dur={:.1}", started.elapsed().as_secs_f64() * 1e3);
    out.trace.timings = Default::default();
    out.trace.calls.iter_mut().for_each(|c| c.elapsed_ms = 0.0);
    let id = s.store.lock().expect("store lock").insert(&out.trajectory);
    let body = GenerateResponse { id, seed, trajectory: out.trajectory, plan: out.plan, trace: out.trace, warnings: out.warnings };
    let mut resp = Json(body).into_response();
    if let Ok(v) = HeaderValue::from_str(&timing) {
        resp.headers_mut().insert("server-timing", v);
    }
    Ok(resp)
}

#[derive(Debug, Deserialize)]
struct PlanRequest {
    prompt: String,
}

async fn plan(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: PlanRequest = parse_body(&body)?;
    let planner = s.planner.clone();
    let (plan, warning) = blocking(move || Ok(plan_query(&req.prompt, planner.as_deref())?)).await?;
    let mut v = serde_json::to_value(&plan).expect("plan serializes");
    if let Some(w) = warning {
        v["warnings"] = json!([w]);
    }
    Ok(Json(v))
}

#[derive(Debug, Deserialize)]
struct AnchorRequest {
    prompt: String,
    scene_id: String,
    #[serde(default = "yes")]
    refine: bool,
}

async fn anchor(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<chatcam_core::anchor::AnchorResult>> {
    let req: AnchorRequest = parse_body(&body)?;
    s.scene(&req.scene_id)?;
    let state = s.clone();
    let result = blocking(move || {
        let scene = &state.scenes[&req.scene_id];
        let refine = req.refine.then_some(state.refine);
        Ok(determine_anchor(scene, state.provider.as_ref(), &req.prompt, refine.as_ref())?)
    })
    .await?;
    Ok(Json(result))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn export(State(s): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let traj = s
        .store
        .lock()
        .expect("store lock")
        .items
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "TrajectoryNotFound", format!("no trajectory with id {id:?}")))?;
    let body = match q.format.as_deref().unwrap_or("camera_path") {
        "camera_path" => CameraPath::from_trajectory(&traj).to_json(),
        "trajectory" => traj.to_json(),
        other => return Err(ApiError::bad_request("UnsupportedFormat", format!("unknown export format {other:?}"))),
    };
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

/// Accepts a camera-path document and stores the equivalent trajectory.
async fn import(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let path: CameraPath = parse_body(&body)?;
    let traj = path.to_trajectory().map_err(|e| ApiError::bad_request(e.code(), e.to_string()))?;
    let id = s.store.lock().expect("store lock").insert(&traj);
    Ok(Json(json!({ "id": id, "trajectory": traj })))
}
