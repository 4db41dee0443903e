//! Deterministic grammar planner.
//!
//! Clauses are separated by `,`, `;`, `then`, `and then` and `after that`. A clause is either
//! a motion (must contain a camera-motion keyword) or an anchor:
//!
//! * `starting from|at|above|near X`, `start at|from X`, `begin at|from X`, `beginning at X`
//!   → start anchor of the next motion (or the previous one if none follows);
//! * `ending at|above|near|on X`, `end at|on X`, `finish at X`, `finishing at X`, `stopping at X`
//!   → end anchor of the previous motion (or the next one if none precedes);
//! * `from X to Y` → start anchor X and end anchor Y.
//!
//! Markers may also trail a motion clause ("orbit right starting above the fountain"), in
//! which case they bind to that clause. `for N seconds` becomes a duration hint.
//! Leading articles are dropped from anchor text.

use std::sync::OnceLock;

use regex::Regex;

use super::plan::{AnchorRole, Plan, PlanStep};
use crate::dataset::{clause_kind, words};
use crate::error::{Error, Result};

const START_MARKERS: &str = r"(?:starting|beginning)\s+(?:from|at|above|near|by|in front of)|(?:start|begin)\s+(?:from|at|above|near)";
const END_MARKERS: &str = r"(?:ending|finishing|stopping)\s+(?:at|above|near|on|by|in front of)|(?:end|finish|stop)\s+(?:at|above|near|on)";

fn re(cell: &'static OnceLock<Regex>, pattern: impl FnOnce() -> String) -> &'static Regex {
    cell.get_or_init(|| Regex::new(&pattern()).expect("valid planner regex"))
}

fn splitter() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || r"(?i)\s*(?:,\s*and\s+then\b|,\s*then\b|,\s*after\s+that\b|\band\s+then\b|\bthen\b|\bafter\s+that\b|,|;)\s*".into())
}

fn start_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || format!(r"(?i)^(?P<head>.*?)\s*\b(?:{START_MARKERS})\s+(?P<x>.+)$"))
}

fn end_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || format!(r"(?i)^(?P<head>.*?)\s*\b(?:{END_MARKERS})\s+(?P<x>.+)$"))
}

fn from_to_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || r"(?i)^(?P<head>.*?)\s*\bfrom\s+(?P<x>.+?)\s+to\s+(?P<y>.+)$".into())
}

fn duration_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    re(&R, || r"(?i)\s*\bfor\s+(?P<n>\d+(?:\.\d+)?)\s+(?:seconds?|secs?|s)\b".into())
}

fn strip_article(x: &str) -> String {
    let t = x.trim().trim_end_matches(['.', '!', '?']).trim();
    for a in ["the ", "a ", "an "] {
        if t.len() > a.len() && t[..a.len()].eq_ignore_ascii_case(a) {
            return t[a.len()..].trim().to_owned();
        }
    }
    t.to_owned()
}

fn is_motion(text: &str) -> bool {
    clause_kind(&words(text)).is_some()
}

#[derive(Debug)]
enum Item {
    Motion { prompt: String, duration_hint: Option<f64> },
    Anchor { prompt: String, role: AnchorRole, bound: Option<usize>, span: String },
}

fn parse_clause(clause: &str, items: &mut Vec<Item>, motions: &mut usize) -> Result<()> {
    let unparsable = || Error::UnparsableQuery { span: clause.to_owned() };
    let mut text = clause.trim().trim_end_matches(['.', '!', '?']).to_owned();
    let mut anchors: Vec<(String, AnchorRole)> = Vec::new();
    // peel trailing markers, innermost last
    loop {
        if let Some(c) = end_re().captures(&text).filter(|c| !c["x"].trim().is_empty()) {
            anchors.push((strip_article(&c["x"]), AnchorRole::End));
            text = c["head"].trim().to_owned();
        } else if let Some(c) = start_re().captures(&text).filter(|c| !c["x"].trim().is_empty()) {
            anchors.push((strip_article(&c["x"]), AnchorRole::Start));
            text = c["head"].trim().to_owned();
        } else if let Some(c) = from_to_re().captures(&text).filter(|c| c["head"].trim().is_empty() || is_motion(&c["head"])) {
            anchors.push((strip_article(&c["y"]), AnchorRole::End));
            anchors.push((strip_article(&c["x"]), AnchorRole::Start));
            text = c["head"].trim().to_owned();
        } else {
            break;
        }
    }
    let mut duration_hint = None;
    if let Some(c) = duration_re().captures(&text) {
        duration_hint = Some(c["n"].parse::<f64>().map_err(|_| unparsable())?);
        text = duration_re().replace(&text, "").trim().to_owned();
    }
    let bound = if text.is_empty() {
        if anchors.is_empty() {
            return Err(unparsable());
        }
        None
    } else if is_motion(&text) {
        items.push(Item::Motion { prompt: text, duration_hint });
        *motions += 1;
        Some(*motions - 1)
    } else {
        return Err(Error::UnparsableQuery { span: text });
    };
    for (prompt, role) in anchors.into_iter().rev() {
        if prompt.is_empty() {
            return Err(unparsable());
        }
        items.push(Item::Anchor { prompt, role, bound, span: clause.trim().to_owned() });
    }
    Ok(())
}

/// Splits a query into motion clauses and anchor clauses.
pub fn parse_query(query: &str) -> Result<Plan> {
    if query.trim().is_empty() {
        return Err(Error::UnparsableQuery { span: query.to_owned() });
    }
    let mut items = Vec::new();
    let mut motions = 0;
    for clause in splitter().split(query.trim()).map(str::trim).filter(|c| !c.is_empty()) {
        parse_clause(clause, &mut items, &mut motions)?;
    }
    if motions == 0 {
        return Err(Error::UnparsableQuery { span: query.trim().to_owned() });
    }
    // resolve free-standing anchors against their neighbouring motions
    let mut steps = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut motions_before = 0;
    for item in items {
        match item {
            Item::Motion { prompt, duration_hint } => {
                steps.push(PlanStep::Atomic { prompt, duration_hint });
                motions_before += 1;
            }
            Item::Anchor { prompt, role, bound, span } => {
                let attaches_to = bound.unwrap_or(match role {
                    AnchorRole::Start if motions_before < motions => motions_before,
                    AnchorRole::Start => motions - 1,
                    AnchorRole::End if motions_before > 0 => motions_before - 1,
                    AnchorRole::End => 0,
                });
                if !seen.insert((attaches_to, role)) {
                    return Err(Error::UnparsableQuery { span });
                }
                steps.push(PlanStep::Anchor { prompt, role, attaches_to });
            }
        }
    }
    // canonical order: each atomic step followed by its anchors (start before end)
    let key = |s: &PlanStep| -> (usize, u8) {
        match s {
            PlanStep::Atomic { .. } => (0, 0),
            PlanStep::Anchor { role: AnchorRole::Start, attaches_to, .. } => (*attaches_to, 1),
            PlanStep::Anchor { role: AnchorRole::End, attaches_to, .. } => (*attaches_to, 2),
        }
    };
    let mut ordered = Vec::with_capacity(steps.len());
    let mut atomic = 0;
    for s in &steps {
        if matches!(s, PlanStep::Atomic { .. }) {
            ordered.push(s.clone());
            let mut mine: Vec<&PlanStep> = steps.iter().filter(|a| !matches!(a, PlanStep::Atomic { .. }) && key(a).0 == atomic).collect();
            mine.sort_by_key(|a| key(a).1);
            ordered.extend(mine.into_iter().cloned());
            atomic += 1;
        }
    }
    let plan = Plan::new(ordered);
    plan.validate()?;
    Ok(plan)
}
