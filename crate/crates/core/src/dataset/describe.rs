//! Closed-vocabulary description templates and the rule-based text tagger.

use std::collections::BTreeSet;

use super::primitive::{Direction, MotionKind, MotionPrimitive, SpeedClass};

/// Connectives placed between clauses; the planner splits on the same set.
pub const CONNECTIVES: [&str; 3] = [" then ", ", then ", ", after that "];

const PAN: [&str; 3] = ["pan {d} {m}", "rotate the camera {d}ward by {m}", "turn the camera to the {d} by {m}"];
const TILT: [&str; 3] = ["tilt {d} {m}", "tip the camera {d}ward by {m}", "angle the camera {d} by {m}"];
const ROLL: [&str; 3] = ["roll {d} {m}", "spin the camera {d} by {m}", "bank the camera {m} {d}"];
const DOLLY: [&str; 3] = ["dolly {d} {m}", "move the camera {d} {m}", "travel {d} {m} along the view direction"];
const TRUCK: [&str; 3] = ["truck {d} {m}", "slide the camera to the {d} {m}", "move the camera sideways to the {d} {m}"];
const PEDESTAL: [&str; 3] = ["pedestal {d} {m}", "crane the camera {d} {m}", "move the camera straight {d} {m}"];
const ZOOM: [&str; 3] = ["zoom {d} {m}", "adjust the lens to zoom {d} {m}", "change the focal length to zoom {d} {m}"];
const ORBIT: [&str; 3] = [
    "orbit {d} {m} around the subject",
    "circle {d} around the subject by {m}",
    "arc {m} to the {d} around the subject",
];
const DOLLY_ZOOM: [&str; 3] = ["dolly zoom {d} {m}", "perform a dolly zoom {d} {m}", "do a vertigo style dolly zoom {d} {m}"];
const STATIC: [&str; 3] = ["hold the camera still", "keep the camera static", "keep the shot stationary"];

const SLOW: [&str; 3] = ["slowly", "at a slow pace", "gently and slowly"];
const MEDIUM: [&str; 3] = ["", "steadily", "at a steady pace"];
const FAST: [&str; 3] = ["quickly", "at a fast pace", "fast"];
const STATIC_SLOW: [&str; 3] = ["for a long time", "for a long while", "for a long moment"];
const STATIC_FAST: [&str; 3] = ["briefly", "for a brief moment", "for a short moment"];

pub fn templates(kind: MotionKind) -> &'static [&'static str; 3] {
    match kind {
        MotionKind::Pan => &PAN,
        MotionKind::Tilt => &TILT,
        MotionKind::Roll => &ROLL,
        MotionKind::Dolly => &DOLLY,
        MotionKind::Truck => &TRUCK,
        MotionKind::Pedestal => &PEDESTAL,
        MotionKind::Zoom => &ZOOM,
        MotionKind::Orbit => &ORBIT,
        MotionKind::DollyZoom => &DOLLY_ZOOM,
        MotionKind::Static => &STATIC,
    }
}

fn speed_phrases(kind: MotionKind, speed: SpeedClass) -> &'static [&'static str; 3] {
    match (kind, speed) {
        (MotionKind::Static, SpeedClass::Slow) => &STATIC_SLOW,
        (MotionKind::Static, SpeedClass::Medium) => &["", "", ""],
        (MotionKind::Static, SpeedClass::Fast) => &STATIC_FAST,
        (_, SpeedClass::Slow) => &SLOW,
        (_, SpeedClass::Medium) => &MEDIUM,
        (_, SpeedClass::Fast) => &FAST,
    }
}

fn number_word(v: f64) -> String {
    match v {
        x if x == 0.25 => "a quarter of a unit".into(),
        x if x == 0.5 => "half a unit".into(),
        x if x == 0.75 => "three quarters of a unit".into(),
        x if x == 1.0 => "one unit".into(),
        x if x == 1.5 => "one and a half units".into(),
        x if x == 2.0 => "two units".into(),
        x => format!("{} units", x.round() as i64),
    }
}

fn magnitude_phrase(p: &MotionPrimitive) -> String {
    match p.kind {
        MotionKind::Pan | MotionKind::Tilt | MotionKind::Roll | MotionKind::Orbit => {
            format!("{} degrees", p.magnitude.round() as i64)
        }
        MotionKind::Zoom => match p.magnitude {
            x if x == 1.5 => "by a factor of one and a half".into(),
            x if x == 2.0 => "by a factor of two".into(),
            x if x == 3.0 => "by a factor of three".into(),
            x => format!("by a factor of {}", x.round() as i64),
        },
        MotionKind::Dolly | MotionKind::Truck | MotionKind::Pedestal | MotionKind::DollyZoom => number_word(p.magnitude),
        MotionKind::Static => String::new(),
    }
}

/// Describes one primitive with paraphrase `variant` (taken modulo the template count).
pub fn describe_primitive(p: &MotionPrimitive, variant: usize) -> String {
    let (pos, neg) = p.kind.direction_words();
    let dir = if p.direction == Direction::Positive { pos } else { neg };
    let template = templates(p.kind)[variant % 3];
    let mut text = template.replace("{d}", dir).replace("{m}", &magnitude_phrase(p));
    let speed = speed_phrases(p.kind, p.speed)[variant % 3];
    if !speed.is_empty() {
        text.push(' ');
        text.push_str(speed);
    }
    text
}

/// Deterministic description: clause `i` uses paraphrase `(seed + i) mod 3`.
pub fn render_description(ps: &[MotionPrimitive], seed: u64) -> String {
    let mut out = String::new();
    for (i, p) in ps.iter().enumerate() {
        let variant = (seed as usize).wrapping_add(i) % 3;
        if i > 0 {
            out.push_str(CONNECTIVES[(seed as usize).wrapping_add(i) % CONNECTIVES.len()]);
        }
        out.push_str(&describe_primitive(p, variant));
    }
    out
}

/// Lowercased, punctuation-stripped word tokens.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Every word a description can contain, sorted.
pub fn vocabulary() -> Vec<String> {
    let mut set = BTreeSet::new();
    for kind in MotionKind::ALL {
        for &m in kind.magnitude_levels() {
            for direction in [Direction::Positive, Direction::Negative] {
                for speed in SpeedClass::ALL {
                    let p = MotionPrimitive { kind, magnitude: m, direction, speed };
                    for v in 0..3 {
                        set.extend(words(&describe_primitive(&p, v)));
                    }
                }
            }
        }
    }
    for c in CONNECTIVES {
        set.extend(words(c));
    }
    set.into_iter().collect()
}

/// Semantic content of one clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct MotionTag {
    pub kind: MotionKind,
    pub direction: Direction,
    pub speed: SpeedClass,
}

impl MotionTag {
    pub fn of(p: &MotionPrimitive) -> Self {
        let direction = if p.kind == MotionKind::Static { Direction::Positive } else { p.direction };
        Self { kind: p.kind, direction, speed: p.speed }
    }
}

/// Splits text into motion clauses on the description connectives.
pub fn split_clauses(text: &str) -> Vec<String> {
    let mut parts = vec![text.to_lowercase()];
    for c in CONNECTIVES.iter().rev() {
        parts = parts.iter().flat_map(|p| p.split(c).map(str::to_owned).collect::<Vec<_>>()).collect();
    }
    parts.into_iter().map(|p| p.trim().to_owned()).filter(|p| !p.is_empty()).collect()
}

/// Keyword-based motion kind of a clause, if any.
pub fn clause_kind(ws: &[String]) -> Option<MotionKind> {
    let has = |k: &str| ws.iter().any(|w| w == k);
    let pair = ws.windows(2).any(|w| w[0] == "dolly" && w[1] == "zoom");
    if pair || has("vertigo") {
        return Some(MotionKind::DollyZoom);
    }
    let table: [(&[&str], MotionKind); 9] = [
        (&["pan", "rotate", "turn", "swivel"], MotionKind::Pan),
        (&["tilt", "tip", "angle"], MotionKind::Tilt),
        (&["roll", "spin", "bank"], MotionKind::Roll),
        (&["orbit", "circle", "arc"], MotionKind::Orbit),
        (&["zoom"], MotionKind::Zoom),
        (&["dolly", "travel", "push"], MotionKind::Dolly),
        (&["truck", "slide", "sideways"], MotionKind::Truck),
        (&["pedestal", "crane", "boom"], MotionKind::Pedestal),
        (&["still", "static", "stationary", "hold"], MotionKind::Static),
    ];
    for (keys, kind) in table {
        if keys.iter().any(|k| has(k)) {
            return Some(kind);
        }
    }
    if has("move") || has("go") {
        if has("forward") || has("backward") || has("in") || has("out") {
            return Some(MotionKind::Dolly);
        }
        if has("left") || has("right") {
            return Some(MotionKind::Truck);
        }
        if has("up") || has("down") {
            return Some(MotionKind::Pedestal);
        }
    }
    None
}

fn clause_direction(kind: MotionKind, ws: &[String]) -> Direction {
    let has = |k: &str| ws.iter().any(|w| w == k || w.strip_suffix("ward") == Some(k));
    let positive = match kind {
        MotionKind::Pan => has("left"),
        MotionKind::Tilt | MotionKind::Pedestal => has("up"),
        MotionKind::Roll => has("counterclockwise"),
        MotionKind::Dolly => has("forward") || has("in"),
        MotionKind::Truck | MotionKind::Orbit => has("right"),
        MotionKind::Zoom => has("in"),
        MotionKind::DollyZoom => has("out"),
        MotionKind::Static => true,
    };
    if positive {
        Direction::Positive
    } else {
        Direction::Negative
    }
}

fn clause_speed(ws: &[String]) -> SpeedClass {
    let has = |k: &str| ws.iter().any(|w| w == k);
    if has("slowly") || has("slow") || has("long") {
        SpeedClass::Slow
    } else if has("quickly") || has("fast") || has("brief") || has("briefly") || has("short") || has("rapidly") {
        SpeedClass::Fast
    } else {
        SpeedClass::Medium
    }
}

pub fn tag_clause(clause: &str) -> Option<MotionTag> {
    let ws = words(clause);
    let kind = clause_kind(&ws)?;
    Some(MotionTag { kind, direction: clause_direction(kind, &ws), speed: clause_speed(&ws) })
}

/// Tags every clause of a description; clauses without a motion keyword are skipped.
pub fn tag_text(text: &str) -> Vec<MotionTag> {
    split_clauses(text).iter().filter_map(|c| tag_clause(c)).collect()
}
