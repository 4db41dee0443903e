use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorRole {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PlanStep {
    Atomic {
        prompt: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration_hint: Option<f64>,
    },
    Anchor {
        prompt: String,
        role: AnchorRole,
        /// Ordinal of the atomic step (counting atomic steps only).
        attaches_to: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub version: u32,
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn new(steps: Vec<PlanStep>) -> Self {
        Self { version: PLAN_VERSION, steps }
    }

    pub fn atomics(&self) -> impl Iterator<Item = (&str, Option<f64>)> {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::Atomic { prompt, duration_hint } => Some((prompt.as_str(), *duration_hint)),
            _ => None,
        })
    }

    pub fn anchors(&self) -> impl Iterator<Item = (&str, AnchorRole, usize)> {
        self.steps.iter().filter_map(|s| match s {
            PlanStep::Anchor { prompt, role, attaches_to } => Some((prompt.as_str(), *role, *attaches_to)),
            _ => None,
        })
    }

    pub fn atomic_count(&self) -> usize {
        self.atomics().count()
    }

    /// Checks every structural invariant; the message names the first violation.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::PlanValidationFailed(m));
        if self.version != PLAN_VERSION {
            return fail(format!("unsupported plan version {}", self.version));
        }
        let n = self.atomic_count();
        if n == 0 {
            return fail("plan has no atomic step".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                PlanStep::Atomic { prompt, duration_hint } => {
                    if prompt.trim().is_empty() {
                        return fail(format!("step {i}: empty atomic prompt"));
                    }
                    if let Some(d) = duration_hint {
                        if !(*d > 0.0 && d.is_finite()) {
                            return fail(format!("step {i}: duration_hint must be positive"));
                        }
                    }
                }
                PlanStep::Anchor { prompt, role, attaches_to } => {
                    if prompt.trim().is_empty() {
                        return fail(format!("step {i}: empty anchor prompt"));
                    }
                    if *attaches_to >= n {
                        return fail(format!("step {i}: attaches_to {attaches_to} but plan has {n} atomic steps"));
                    }
                    if !seen.insert((*attaches_to, *role)) {
                        return fail(format!("step {i}: atomic {attaches_to} already has a {role:?} anchor"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Plan = serde_json::from_str(s).map_err(|e| Error::PlanValidationFailed(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}
