//! Geometric motion tagger: reads kind, direction and speed back off a single-motion trajectory.

use nalgebra::{Rotation3, Vector3};

use super::describe::MotionTag;
use super::primitive::{Direction, MotionKind, SpeedClass};
use crate::camera::Trajectory;

const ROTATION_THRESHOLD_DEG: f64 = 5.0;
const TRANSLATION_THRESHOLD: f64 = 0.1;
const FOCAL_THRESHOLD: f64 = 0.1;

/// Tags the dominant motion between the first and last frame, expressed in the
/// first frame's camera coordinates. Speed comes from the duration relative to
/// the medium baseline.
pub fn tag_trajectory(traj: &Trajectory, base_duration_s: f64) -> MotionTag {
    let (f0, f1) = (traj.first(), traj.last());
    let r0t = f0.rotation().transpose();
    let rel = Rotation3::from_matrix_unchecked(r0t * f1.rotation());
    let (axis, angle) = rel.axis_angle().map(|(a, ang)| (a.into_inner(), ang)).unwrap_or((Vector3::y(), 0.0));
    let local = r0t * (f1.trans - f0.trans);
    let log_focal = (f1.focal / f0.focal).ln();

    let sign = |positive: bool| if positive { Direction::Positive } else { Direction::Negative };
    let dominant = |v: &Vector3<f64>| v.iamax();
    let moved = local.norm() > TRANSLATION_THRESHOLD;

    let (kind, direction) = if log_focal.abs() > FOCAL_THRESHOLD {
        if moved {
            (MotionKind::DollyZoom, sign(local.z > 0.0))
        } else {
            (MotionKind::Zoom, sign(log_focal > 0.0))
        }
    } else if angle.to_degrees() > ROTATION_THRESHOLD_DEG {
        let signed = axis * angle;
        if moved {
            (MotionKind::Orbit, sign(local.x > 0.0))
        } else {
            match dominant(&signed) {
                0 => (MotionKind::Tilt, sign(signed.x > 0.0)),
                1 => (MotionKind::Pan, sign(signed.y > 0.0)),
                _ => (MotionKind::Roll, sign(signed.z > 0.0)),
            }
        }
    } else if moved {
        match dominant(&local) {
            0 => (MotionKind::Truck, sign(local.x > 0.0)),
            1 => (MotionKind::Pedestal, sign(local.y > 0.0)),
            _ => (MotionKind::Dolly, sign(local.z < 0.0)),
        }
    } else {
        (MotionKind::Static, Direction::Positive)
    };

    let ratio = traj.duration_s() / base_duration_s;
    let speed = if ratio < 0.75 {
        SpeedClass::Fast
    } else if ratio > 1.5 {
        SpeedClass::Slow
    } else {
        SpeedClass::Medium
    };
    MotionTag { kind, direction, speed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::primitive::{gen_primitive, MotionPrimitive};

    #[test]
    fn recovers_every_primitive() {
        for kind in MotionKind::ALL {
            for &m in kind.magnitude_levels() {
                for d in [Direction::Positive, Direction::Negative] {
                    for s in SpeedClass::ALL {
                        let p = MotionPrimitive { kind, magnitude: m, direction: d, speed: s };
                        if p.validate().is_err() {
                            continue;
                        }
                        let t = gen_primitive(&p, 12, 4.0).unwrap();
                        assert_eq!(tag_trajectory(&t, 4.0), MotionTag::of(&p), "{p:?}");
                    }
                }
            }
        }
    }
}
