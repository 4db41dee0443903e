//! Optional chat-model planner producing the same [`Plan`] schema as the grammar.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::grammar::parse_query;
use super::plan::{AnchorRole, Plan, PlanStep, PLAN_VERSION};
use crate::error::{Error, Result};

pub const INSTRUCTIONS: &str = r#"You plan camera trajectories. Break the user's request into sub-tasks.
Tools: CineGPT turns a short description of ONE camera motion into a trajectory; the anchor
determinator finds a camera pose in the scene matching a short description of what is seen.
Reply with a single JSON object and nothing else:
{"version": 1, "steps": [
  {"type": "atomic", "prompt": "<one camera motion>", "duration_hint": <seconds, optional>},
  {"type": "anchor", "prompt": "<what the camera sees>", "role": "start" | "end", "attaches_to": <index of the atomic step, counting atomic steps only, from 0>}
]}
Rules: at least one atomic step; each atomic step has at most one start and one end anchor."#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self { role: role.into(), content: content.into() }
    }
}

pub trait ChatClient: Send + Sync {
    /// One completion; transport failures map to [`Error::RemotePlannerUnavailable`].
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

/// OpenAI-style `/chat/completions` client.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
}

impl HttpChatClient {
    /// Reads `CHATCAM_PLANNER_URL`, `CHATCAM_PLANNER_MODEL` and `CHATCAM_PLANNER_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var("CHATCAM_PLANNER_URL").ok()?;
        Some(Self {
            endpoint,
            model: std::env::var("CHATCAM_PLANNER_MODEL").unwrap_or_else(|_| "gpt-4".into()),
            api_key: std::env::var("CHATCAM_PLANNER_KEY").ok(),
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let unavailable = |e: String| Error::RemotePlannerUnavailable(e);
        let body = serde_json::json!({ "model": self.model, "messages": messages, "temperature": 0 });
        let mut req = ureq::post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let reply: Value = req
            .send_json(&body)
            .map_err(|e| unavailable(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| unavailable(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| unavailable("response has no message content".into()))
    }
}

/// Pulls the outermost JSON object out of a reply that may carry prose or code fences.
fn extract_json(reply: &str) -> Result<Value> {
    let (Some(a), Some(b)) = (reply.find('{'), reply.rfind('}')) else {
        return Err(Error::PlanValidationFailed("reply contains no JSON object".into()));
    };
    if b < a {
        return Err(Error::PlanValidationFailed("reply contains no JSON object".into()));
    }
    serde_json::from_str(&reply[a..=b]).map_err(|e| Error::PlanValidationFailed(format!("invalid JSON: {e}")))
}

/// Best-effort fix of common mistakes: missing version, blank or dangling anchors, duplicated roles.
/// Returns `None` when nothing sensible remains.
pub fn repair_plan(value: &Value) -> Option<Plan> {
    let steps = value.get("steps")?.as_array()?;
    let mut atomics = 0usize;
    let mut parsed = Vec::new();
    for s in steps {
        match s.get("type").and_then(Value::as_str) {
            Some("atomic") => {
                let prompt = s.get("prompt")?.as_str()?.trim();
                if prompt.is_empty() {
                    continue;
                }
                let hint = s.get("duration_hint").and_then(Value::as_f64).filter(|d| *d > 0.0 && d.is_finite());
                parsed.push(PlanStep::Atomic { prompt: prompt.to_owned(), duration_hint: hint });
                atomics += 1;
            }
            Some("anchor") => {
                let Some(prompt) = s.get("prompt").and_then(Value::as_str).map(str::trim) else { continue };
                let role = match s.get("role").and_then(Value::as_str) {
                    Some("start") => AnchorRole::Start,
                    Some("end") => AnchorRole::End,
                    _ => continue,
                };
                let Some(idx) = s.get("attaches_to").and_then(Value::as_u64) else { continue };
                if !prompt.is_empty() {
                    parsed.push(PlanStep::Anchor { prompt: prompt.to_owned(), role, attaches_to: idx as usize });
                }
            }
            _ => continue,
        }
    }
    let mut seen = std::collections::HashSet::new();
    parsed.retain(|s| match s {
        PlanStep::Anchor { role, attaches_to, .. } => *attaches_to < atomics && seen.insert((*attaches_to, *role)),
        _ => true,
    });
    let plan = Plan::new(parsed);
    plan.validate().ok().map(|_| plan)
}

fn interpret(reply: &str) -> Result<(Plan, bool)> {
    let value = extract_json(reply)?;
    let strict = serde_json::from_value::<Plan>(value.clone())
        .map_err(|e| Error::PlanValidationFailed(e.to_string()))
        .and_then(|p| p.validate().map(|_| p));
    match strict {
        Ok(p) => Ok((p, false)),
        Err(e) => repair_plan(&value).map(|p| (p, true)).ok_or(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmPlan {
    pub plan: Plan,
    pub repaired: bool,
    pub attempts: usize,
}

/// Asks the chat model for a plan; one retry with the validation error as feedback.
pub fn llm_plan(query: &str, client: &dyn ChatClient) -> Result<LlmPlan> {
    if query.trim().is_empty() {
        return Err(Error::UnparsableQuery { span: query.to_owned() });
    }
    let mut messages = vec![ChatMessage::new("system", INSTRUCTIONS), ChatMessage::new("user", query)];
    let reply = client.complete(&messages)?;
    let err = match interpret(&reply) {
        Ok((plan, repaired)) => return Ok(LlmPlan { plan, repaired, attempts: 1 }),
        Err(e) => e,
    };
    tracing::debug!(error = %err, "planner reply rejected; retrying");
    messages.push(ChatMessage::new("assistant", reply));
    messages.push(ChatMessage::new(
        "user",
        format!("That reply is invalid ({err}). Answer again with only the JSON object, version {PLAN_VERSION}."),
    ));
    let reply = client.complete(&messages)?;
    let (plan, repaired) = interpret(&reply)?;
    Ok(LlmPlan { plan, repaired, attempts: 2 })
}

/// The chat planner when available, otherwise the grammar; the warning says why it fell back.
pub fn plan_query(query: &str, client: Option<&dyn ChatClient>) -> Result<(Plan, Option<String>)> {
    let Some(client) = client else { return Ok((parse_query(query)?, None)) };
    match llm_plan(query, client) {
        Ok(p) => Ok((p.plan, p.repaired.then(|| "remote plan was repaired".to_owned()))),
        Err(e) => {
            tracing::warn!(error = %e, "remote planner failed; using grammar planner");
            Ok((parse_query(query)?, Some(format!("remote planner failed ({}); grammar planner used", e.code()))))
        }
    }
}
