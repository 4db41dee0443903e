use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::compose::compose;
use super::llm::{plan_query, ChatClient};
use super::plan::{Plan, PlanStep};
use crate::anchor::{determine_anchor, EmbeddingProvider, RefineConfig, Scene};
use crate::camera::{CameraFrame, Trajectory};
use crate::error::{Error, Result};
use crate::gpt::{generate_trajectory, CineGpt, SamplerParams};
use crate::tokenizer::TokenizerModel;

pub const TOKENIZER_FILE: &str = "tokenizer.ckpt";
pub const GPT_FILE: &str = "cinegpt.ckpt";

/// Trained tokenizer and generator, checked for compatibility.
#[derive(Debug, Clone)]
pub struct Models {
    pub tokenizer: TokenizerModel,
    pub gpt: CineGpt,
}

impl Models {
    pub fn new(tokenizer: TokenizerModel, gpt: CineGpt) -> Result<Self> {
        let (k, v) = (tokenizer.codebook_size(), gpt.vocab.codebook_size());
        if k != v {
            return Err(Error::Checkpoint(format!("tokenizer has {k} codes but the generator vocabulary expects {v}")));
        }
        Ok(Self { tokenizer, gpt })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::new(TokenizerModel::load(&dir.join(TOKENIZER_FILE))?, CineGpt::load(&dir.join(GPT_FILE))?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.tokenizer.save(&dir.join(TOKENIZER_FILE))?;
        self.gpt.save(&dir.join(GPT_FILE))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    /// Index into `Plan::steps`; `None` for the final composition.
    pub step: Option<usize>,
    pub tool: String,
    pub input: Value,
    pub output: Value,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub plan_ms: f64,
    pub tools_ms: f64,
    pub compose_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceLog {
    pub observation: String,
    pub reasoning: String,
    pub calls: Vec<ToolCall>,
    pub timings: Timings,
}

impl TraceLog {
    pub fn count(&self, tool: &str) -> usize {
        self.calls.iter().filter(|c| c.tool == tool).count()
    }
}

pub const TOOL_CINEGPT: &str = "cinegpt";
pub const TOOL_ANCHOR: &str = "anchor";
pub const TOOL_COMPOSE: &str = "compose";

#[derive(Clone, Copy)]
pub struct PipelineContext<'a> {
    pub models: &'a Models,
    pub scene: Option<&'a Scene>,
    pub provider: Option<&'a dyn EmbeddingProvider>,
    pub planner: Option<&'a dyn ChatClient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Atomic step `i` is sampled with seed `sampler.seed + i`.
    pub sampler: SamplerParams,
    /// `None` keeps the selected image's camera unrefined.
    pub refine: Option<RefineConfig>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { sampler: SamplerParams::greedy(), refine: Some(RefineConfig::default()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub trajectory: Trajectory,
    pub plan: Plan,
    pub trace: TraceLog,
    pub warnings: Vec<String>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn frame_json(f: &CameraFrame) -> Value {
    serde_json::to_value(f).expect("frame serializes")
}

/// Plans `query` and executes it.
pub fn run_pipeline(query: &str, ctx: PipelineContext<'_>, options: &PipelineOptions) -> Result<PipelineOutput> {
    let t0 = Instant::now();
    let (plan, warning) = plan_query(query, ctx.planner)?;
    let plan_ms = ms(t0);
    let mut out = execute_plan(&plan, ctx, options)?;
    out.warnings.splice(0..0, warning);
    out.trace.observation = format!("user asked: {query}");
    out.trace.timings.plan_ms = plan_ms;
    out.trace.timings.total_ms = ms(t0);
    Ok(out)
}

/// Executes an already validated plan: one generator call per atomic step, one anchor call per
/// anchor step, then composition.
pub fn execute_plan(plan: &Plan, ctx: PipelineContext<'_>, options: &PipelineOptions) -> Result<PipelineOutput> {
    let t0 = Instant::now();
    plan.validate()?;
    options.sampler.validate()?;
    let (n_atomic, n_anchor) = (plan.atomic_count(), plan.anchors().count());
    let mut trace = TraceLog {
        reasoning: format!(
            "{n_atomic} camera motion(s) for the trajectory generator, {n_anchor} anchor(s) for scene grounding; \
             segments are chained end to start and pinned at anchors"
        ),
        ..Default::default()
    };
    let mut warnings = Vec::new();
    let mut trajectories = Vec::with_capacity(n_atomic);
    let mut anchors = Vec::with_capacity(n_anchor);
    let mut atomic_index = 0u64;
    for (i, step) in plan.steps.iter().enumerate() {
        let t = Instant::now();
        match step {
            PlanStep::Atomic { prompt, .. } => {
                let sampler = SamplerParams { seed: options.sampler.seed.wrapping_add(atomic_index), ..options.sampler.clone() };
                atomic_index += 1;
                let g = generate_trajectory(&ctx.models.gpt.model, &ctx.models.gpt.vocab, &ctx.models.tokenizer, prompt, &sampler)
                    .map_err(|e| e.at_step(i))?;
                if g.truncated {
                    warnings.push(format!("step {i}: generation hit the token limit and was truncated"));
                }
                trace.calls.push(ToolCall {
                    step: Some(i),
                    tool: TOOL_CINEGPT.into(),
                    input: json!({ "prompt": prompt, "seed": sampler.seed }),
                    output: json!({ "tokens": g.tokens.ids, "duration_s": g.tokens.duration_s, "frames": g.trajectory.len(), "truncated": g.truncated }),
                    elapsed_ms: ms(t),
                });
                trajectories.push(g.trajectory);
            }
            PlanStep::Anchor { prompt, role, attaches_to } => {
                let scene = ctx.scene.ok_or(Error::SceneRequired).map_err(|e| e.at_step(i))?;
                let provider = ctx
                    .provider
                    .ok_or_else(|| Error::EmbeddingUnavailable("no embedding provider configured".into()))
                    .map_err(|e| e.at_step(i))?;
                let a = determine_anchor(scene, provider, prompt, options.refine.as_ref()).map_err(|e| e.at_step(i))?;
                warnings.extend(a.warnings.iter().map(|w| format!("step {i}: {w}")));
                trace.calls.push(ToolCall {
                    step: Some(i),
                    tool: TOOL_ANCHOR.into(),
                    input: json!({ "prompt": prompt, "role": role, "attaches_to": attaches_to, "scene_id": scene.id }),
                    output: serde_json::to_value(&a)?,
                    elapsed_ms: ms(t),
                });
                anchors.push(a.camera);
            }
        }
    }
    let tools_ms = ms(t0);
    let t = Instant::now();
    let composition = compose(plan, &trajectories, &anchors)?;
    trace.calls.push(ToolCall {
        step: None,
        tool: TOOL_COMPOSE.into(),
        input: json!({ "segments": trajectories.len(), "anchors": anchors.iter().map(frame_json).collect::<Vec<_>>() }),
        output: json!({
            "frames": composition.trajectory.len(),
            "duration_s": composition.trajectory.duration_s(),
            "segment_starts": composition.segment_starts,
            "anchor_frames": composition.anchor_frames,
            "scales": composition.scales,
        }),
        elapsed_ms: ms(t),
    });
    trace.timings = Timings { plan_ms: 0.0, tools_ms, compose_ms: ms(t), total_ms: ms(t0) };
    Ok(PipelineOutput { trajectory: composition.trajectory, plan: plan.clone(), trace, warnings })
}
