//! Composition of atomic trajectories through anchor poses.
//!
//! Anchors pin *junctions*: the start anchor of atomic `i` pins junction `i`, its end anchor pins
//! junction `i + 1`. Segments are then placed left to right:
//!
//! * start known (pinned, or chained from the previous segment) and end pinned → align the start,
//!   then scale and rotate about it so the end lands on the pinned translation; the remaining
//!   orientation mismatch at the end is blended in geodesically along the segment;
//! * only the start known → rigid alignment of the start;
//! * only the end pinned (first segment) → rigid alignment of the end;
//! * neither → left in its canonical frame.
//!
//! Junction frames are shared, so the output has `Σ Mᵢ − (n − 1)` frames.

use nalgebra::{Matrix3, Vector3};

use super::plan::{AnchorRole, Plan};
use crate::camera::{
    align_endpoint, apply_similarity, axis_angle, rotation_between, scale_focal, slerp, CameraFrame, Endpoint,
    SimilarityTransform, Trajectory,
};
use crate::error::{Error, Result};

/// Below this displacement a segment is treated as stationary when fitting two anchors.
const MIN_SPAN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub trajectory: Trajectory,
    /// Each atomic trajectory after placement, before junction deduplication.
    pub segments: Vec<Trajectory>,
    /// Output frame index of each segment's first frame.
    pub segment_starts: Vec<usize>,
    /// Output frame index for every anchor step, in plan order.
    pub anchor_frames: Vec<usize>,
    /// Uniform scale applied to each segment (1 unless both ends were pinned).
    pub scales: Vec<f64>,
}

impl Composition {
    /// Largest pose gap between consecutive placed segments.
    pub fn max_junction_gap(&self) -> f64 {
        self.segments.windows(2).map(|w| w[0].last().pose_gap(w[1].first())).fold(0.0, f64::max)
    }
}

fn pin(pins: &mut [Option<CameraFrame>], idx: usize, frame: CameraFrame, prompt: &str) -> Result<()> {
    if let Some(prev) = &pins[idx] {
        if prev.pose_gap(&frame) > 1e-9 {
            return Err(Error::InfeasibleComposition(format!(
                "anchor \"{prompt}\" pins a junction that another anchor already fixes elsewhere"
            )));
        }
    }
    pins[idx] = Some(frame);
    Ok(())
}

fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let probe = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    v.cross(&probe).normalize()
}

/// Places `traj` so its first pose is `start` and its last translation is `end.trans`, then
/// blends the end orientation onto `end`'s.
fn fit_between(traj: &Trajectory, start: &CameraFrame, end: &CameraFrame) -> Result<(Trajectory, f64)> {
    let aligned = align_endpoint(traj, start, Endpoint::Start);
    let v = aligned.last().trans - aligned.first().trans;
    let w = end.trans - start.trans;
    let (vn, wn) = (v.norm(), w.norm());
    let scale = if vn < MIN_SPAN && wn < MIN_SPAN {
        1.0
    } else if vn < MIN_SPAN {
        return Err(Error::InfeasibleComposition(format!(
            "stationary segment cannot reach an end anchor {wn:.3} away"
        )));
    } else {
        wn / vn
    };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InfeasibleComposition(format!(
            "start and end anchors coincide but the segment moves {vn:.3}; required scale {scale}"
        )));
    }
    let rot: Matrix3<f64> = if vn < MIN_SPAN {
        Matrix3::identity()
    } else {
        let (vh, wh) = (v / vn, w / wn);
        rotation_between(&vh, &wh).unwrap_or_else(|| axis_angle(any_perpendicular(&vh), std::f64::consts::PI))
    };
    // x ↦ s·R(x − p) + p about the start position p
    let p = start.trans;
    let s = SimilarityTransform::rigid(&rot, p - rot * p * scale);
    let s = SimilarityTransform { scale, ..s };
    let placed = apply_similarity(&aligned, &s);

    let mut frames = placed.into_frames();
    let n = frames.len();
    let mismatch = end.rotation() * frames[n - 1].rotation().transpose();
    let identity = Matrix3::identity();
    for (k, f) in frames.iter_mut().enumerate() {
        let t = k as f64 / (n - 1) as f64;
        let r = slerp(&identity, &mismatch, t) * f.rotation();
        *f = CameraFrame::from_matrix(&r, f.trans, f.focal);
    }
    frames[0].rot = start.rot.normalized()?;
    frames[0].trans = start.trans;
    frames[n - 1].rot = end.rot.normalized()?;
    frames[n - 1].trans = end.trans;
    Ok((Trajectory::new(frames, traj.duration_s())?, scale))
}

fn match_focal(traj: &Trajectory, idx: Endpoint, focal: f64) -> Trajectory {
    let f = match idx {
        Endpoint::Start => traj.first().focal,
        Endpoint::End => traj.last().focal,
    };
    if f == focal {
        traj.clone()
    } else {
        scale_focal(traj, focal / f)
    }
}

/// Composes one trajectory per atomic step through the anchor poses (one per anchor step, in
/// plan order). Atomic duration hints replace the generated durations.
pub fn compose(plan: &Plan, trajectories: &[Trajectory], anchors: &[CameraFrame]) -> Result<Composition> {
    plan.validate()?;
    let n = plan.atomic_count();
    if trajectories.len() != n {
        return Err(Error::LengthMismatch(trajectories.len(), n));
    }
    let anchor_steps: Vec<_> = plan.anchors().collect();
    if anchors.len() != anchor_steps.len() {
        return Err(Error::LengthMismatch(anchors.len(), anchor_steps.len()));
    }

    let mut pins: Vec<Option<CameraFrame>> = vec![None; n + 1];
    let mut anchor_junctions = Vec::with_capacity(anchors.len());
    for ((prompt, role, attaches_to), frame) in anchor_steps.iter().zip(anchors) {
        frame.validate()?;
        let j = match role {
            AnchorRole::Start => *attaches_to,
            AnchorRole::End => attaches_to + 1,
        };
        pin(&mut pins, j, *frame, prompt)?;
        anchor_junctions.push(j);
    }

    let hints: Vec<Option<f64>> = plan.atomics().map(|(_, d)| d).collect();
    let mut segments: Vec<Trajectory> = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    for (i, traj) in trajectories.iter().enumerate() {
        let traj = match hints[i] {
            Some(d) => traj.with_duration(d)?,
            None => traj.clone(),
        };
        let start = pins[i].or_else(|| segments.last().map(|s| *s.last()));
        let end = pins[i + 1];
        let (placed, scale) = match (start, end) {
            (Some(a), Some(b)) => fit_between(&match_focal(&traj, Endpoint::Start, a.focal), &a, &b)?,
            (Some(a), None) => (align_endpoint(&match_focal(&traj, Endpoint::Start, a.focal), &a, Endpoint::Start), 1.0),
            (None, Some(b)) => (align_endpoint(&match_focal(&traj, Endpoint::End, b.focal), &b, Endpoint::End), 1.0),
            (None, None) => (traj, 1.0),
        };
        segments.push(placed);
        scales.push(scale);
    }

    let mut frames: Vec<CameraFrame> = Vec::new();
    let mut segment_starts = Vec::with_capacity(n);
    let mut duration = 0.0;
    for (i, seg) in segments.iter().enumerate() {
        duration += seg.duration_s();
        if i == 0 {
            segment_starts.push(0);
            frames.extend_from_slice(seg.frames());
        } else {
            segment_starts.push(frames.len() - 1);
            frames.extend_from_slice(&seg.frames()[1..]);
        }
    }
    let junction_frame = |j: usize| if j < n { segment_starts[j] } else { frames.len() - 1 };
    let anchor_frames = anchor_junctions.iter().map(|&j| junction_frame(j)).collect();
    let trajectory = Trajectory::new(frames, duration)?;
    Ok(Composition { trajectory, segments, segment_starts, anchor_frames, scales })
}
