//! Query planning, tool orchestration and trajectory composition.

mod compose;
mod eval;
mod grammar;
mod llm;
mod pipeline;
mod plan;

pub use compose::{compose, Composition};
pub use eval::{evaluate, reconstruction_floor, EvalReport, EvalRow, ROTATION_COLUMN, TRANSLATION_COLUMN};
pub use grammar::parse_query;
pub use llm::{llm_plan, plan_query, repair_plan, ChatClient, ChatMessage, HttpChatClient, LlmPlan, INSTRUCTIONS};
pub use pipeline::{
    execute_plan, run_pipeline, Models, PipelineContext, PipelineOptions, PipelineOutput, Timings, ToolCall, TraceLog, GPT_FILE,
    TOKENIZER_FILE, TOOL_ANCHOR, TOOL_CINEGPT, TOOL_COMPOSE,
};
pub use plan::{AnchorRole, Plan, PlanStep, PLAN_VERSION};
