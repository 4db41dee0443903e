use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{align_endpoint, axis_angle, scale_focal, CameraFrame, Endpoint, Trajectory, CANONICAL_FOCAL};
use crate::error::{Error, Result};

/// Distance from the canonical camera to the subject used by orbit and dolly zoom.
pub const SUBJECT_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Pan,
    Tilt,
    Roll,
    Dolly,
    Truck,
    Pedestal,
    Zoom,
    Orbit,
    DollyZoom,
    Static,
}

impl MotionKind {
    pub const ALL: [MotionKind; 10] = [
        MotionKind::Pan,
        MotionKind::Tilt,
        MotionKind::Roll,
        MotionKind::Dolly,
        MotionKind::Truck,
        MotionKind::Pedestal,
        MotionKind::Zoom,
        MotionKind::Orbit,
        MotionKind::DollyZoom,
        MotionKind::Static,
    ];

    /// Words for the positive and negative direction.
    pub fn direction_words(self) -> (&'static str, &'static str) {
        match self {
            MotionKind::Pan => ("left", "right"),
            MotionKind::Tilt | MotionKind::Pedestal => ("up", "down"),
            MotionKind::Roll => ("counterclockwise", "clockwise"),
            MotionKind::Dolly => ("forward", "backward"),
            MotionKind::Truck | MotionKind::Orbit => ("right", "left"),
            MotionKind::Zoom => ("in", "out"),
            MotionKind::DollyZoom => ("out", "in"),
            MotionKind::Static => ("", ""),
        }
    }

    /// Allowed magnitudes used by the corpus sampler.
    pub fn magnitude_levels(self) -> &'static [f64] {
        match self {
            MotionKind::Pan | MotionKind::Tilt | MotionKind::Roll | MotionKind::Orbit => &[15.0, 30.0, 45.0, 60.0, 90.0],
            MotionKind::Dolly | MotionKind::Truck | MotionKind::Pedestal => &[0.5, 1.0, 1.5, 2.0],
            MotionKind::Zoom => &[1.5, 2.0, 3.0],
            MotionKind::DollyZoom => &[0.25, 0.5, 0.75],
            MotionKind::Static => &[0.0],
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("enum");
        write!(f, "{}", s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClass {
    Slow,
    Medium,
    Fast,
}

impl SpeedClass {
    pub const ALL: [SpeedClass; 3] = [SpeedClass::Slow, SpeedClass::Medium, SpeedClass::Fast];

    pub fn duration_factor(self) -> f64 {
        match self {
            SpeedClass::Slow => 2.0,
            SpeedClass::Medium => 1.0,
            SpeedClass::Fast => 0.5,
        }
    }
}

/// One elementary camera move. Magnitude is degrees for rotations and orbit,
/// scene units for translations and dolly zoom, and a focal ratio (> 1) for zoom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub kind: MotionKind,
    pub magnitude: f64,
    pub direction: Direction,
    pub speed: SpeedClass,
}

impl MotionPrimitive {
    pub fn new(kind: MotionKind, magnitude: f64, direction: Direction, speed: SpeedClass) -> Result<Self> {
        let p = Self { kind, magnitude, direction, speed };
        p.validate()?;
        Ok(p)
    }

    pub fn still(speed: SpeedClass) -> Self {
        Self { kind: MotionKind::Static, magnitude: 0.0, direction: Direction::Positive, speed }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.magnitude;
        let ok = match self.kind {
            MotionKind::Static => m == 0.0,
            MotionKind::Zoom => m.is_finite() && m > 1.0,
            // moving in must not pass through the subject
            MotionKind::DollyZoom if self.direction == Direction::Negative => m > 0.0 && m < SUBJECT_DISTANCE,
            _ => m.is_finite() && m > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid magnitude {m} for {}", self.kind)))
        }
    }

    /// End/start focal ratio of a dolly zoom, keeping focal / subject distance constant.
    pub fn dolly_zoom_focal_ratio(&self) -> f64 {
        (SUBJECT_DISTANCE + self.direction.sign() * self.magnitude) / SUBJECT_DISTANCE
    }

    pub fn duration_s(&self, base_duration_s: f64) -> f64 {
        base_duration_s * self.speed.duration_factor()
    }

    /// Camera pose at normalized progress `s` ∈ [0, 1], relative to the canonical pose.
    fn pose_at(&self, s: f64) -> (Matrix3<f64>, Vector3<f64>, f64) {
        let sign = self.direction.sign();
        let f0 = CANONICAL_FOCAL;
        let rot = |axis: Vector3<f64>| axis_angle(axis, sign * self.magnitude.to_radians() * s);
        match self.kind {
            MotionKind::Static => (Matrix3::identity(), Vector3::zeros(), f0),
            MotionKind::Pan => (rot(Vector3::y()), Vector3::zeros(), f0),
            MotionKind::Tilt => (rot(Vector3::x()), Vector3::zeros(), f0),
            MotionKind::Roll => (rot(Vector3::z()), Vector3::zeros(), f0),
            MotionKind::Dolly => (Matrix3::identity(), Vector3::new(0.0, 0.0, -sign * self.magnitude * s), f0),
            MotionKind::Truck => (Matrix3::identity(), Vector3::new(sign * self.magnitude * s, 0.0, 0.0), f0),
            MotionKind::Pedestal => (Matrix3::identity(), Vector3::new(0.0, sign * self.magnitude * s, 0.0), f0),
            MotionKind::Zoom => (Matrix3::identity(), Vector3::zeros(), f0 * self.magnitude.powf(sign * s)),
            MotionKind::Orbit => {
                let phi = sign * self.magnitude.to_radians() * s;
                let subject = Vector3::new(0.0, 0.0, -SUBJECT_DISTANCE);
                let r = axis_angle(Vector3::y(), phi);
                (r, subject + r * Vector3::new(0.0, 0.0, SUBJECT_DISTANCE), f0)
            }
            MotionKind::DollyZoom => {
                let z = sign * self.magnitude * s;
                (Matrix3::identity(), Vector3::new(0.0, 0.0, z), f0 * (SUBJECT_DISTANCE + z) / SUBJECT_DISTANCE)
            }
        }
    }
}

/// Builds a single primitive in the canonical frame. `base_duration_s` is the medium-speed duration.
pub fn gen_primitive(p: &MotionPrimitive, frames: usize, base_duration_s: f64) -> Result<Trajectory> {
    p.validate()?;
    if frames < 2 {
        return Err(Error::InvalidTrajectory(format!("need at least 2 frames, got {frames}")));
    }
    let out = (0..frames)
        .map(|i| {
            let (r, t, f) = p.pose_at(i as f64 / (frames - 1) as f64);
            CameraFrame::from_matrix(&r, t, f)
        })
        .collect();
    Trajectory::new(out, p.duration_s(base_duration_s))
}

/// Appends `next` so that it starts at `prev`'s final pose and focal; the shared
/// junction frame is kept once.
pub fn chain_onto(prev: &[CameraFrame], next: &Trajectory) -> Vec<CameraFrame> {
    let end = prev.last().expect("non-empty");
    let placed = align_endpoint(next, end, Endpoint::Start);
    let placed = scale_focal(&placed, end.focal / placed.first().focal);
    let mut frames = prev.to_vec();
    frames.extend(placed.frames().iter().skip(1).copied());
    frames
}

/// Chains primitives, `frames_per_segment` each; `M_total = Σ M_i − (count − 1)`.
pub fn compose_primitives(ps: &[MotionPrimitive], frames_per_segment: &[usize], base_duration_s: f64) -> Result<Trajectory> {
    if ps.is_empty() {
        return Err(Error::Config("need at least one primitive".into()));
    }
    if frames_per_segment.len() != ps.len() {
        return Err(Error::LengthMismatch(ps.len(), frames_per_segment.len()));
    }
    let mut frames: Vec<CameraFrame> = Vec::new();
    let mut duration = 0.0;
    for (p, &m) in ps.iter().zip(frames_per_segment) {
        let seg = gen_primitive(p, m, base_duration_s)?;
        duration += seg.duration_s();
        frames = if frames.is_empty() { seg.into_frames() } else { chain_onto(&frames, &seg) };
    }
    Trajectory::new(frames, duration)
}

/// Splits `total_frames` over segments in proportion to their durations, so the
/// composite stays uniformly sampled in time.
pub fn allocate_frames(ps: &[MotionPrimitive], total_frames: usize, base_duration_s: f64) -> Result<Vec<usize>> {
    let n = ps.len();
    let steps = total_frames.saturating_sub(1);
    if n == 0 || steps < n {
        return Err(Error::Config(format!("{total_frames} frames cannot hold {n} segments")));
    }
    let durations: Vec<f64> = ps.iter().map(|p| p.duration_s(base_duration_s)).collect();
    let total: f64 = durations.iter().sum();
    let mut alloc: Vec<usize> = durations.iter().map(|d| ((d / total) * steps as f64).floor().max(1.0) as usize).collect();
    // hand out remaining steps by largest fractional part, lowest index first
    while alloc.iter().sum::<usize>() < steps {
        let i = (0..n)
            .max_by(|&a, &b| {
                let fa = durations[a] / total * steps as f64 - alloc[a] as f64;
                let fb = durations[b] / total * steps as f64 - alloc[b] as f64;
                fa.partial_cmp(&fb).unwrap().then(b.cmp(&a))
            })
            .expect("non-empty");
        alloc[i] += 1;
    }
    while alloc.iter().sum::<usize>() > steps {
        let i = (0..n).filter(|&i| alloc[i] > 1).max_by_key(|&i| alloc[i]).expect("reducible");
        alloc[i] -= 1;
    }
    Ok(alloc.into_iter().map(|s| s + 1).collect())
}
