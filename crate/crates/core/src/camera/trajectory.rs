use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{geodesic_angle, matrix_to_rot6d_unchecked, slerp, Rot6D};
use crate::error::{Error, Result};

/// Normalized focal length of the canonical camera (focal pixels / image width).
pub const CANONICAL_FOCAL: f64 = 0.8;

/// One camera pose. `trans` is the camera centre in world coordinates and the
/// rotation maps camera-local axes to world axes; the camera looks along its local −z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRepr", into = "FrameRepr")]
pub struct CameraFrame {
    pub rot: Rot6D,
    pub trans: Vector3<f64>,
    pub focal: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameRepr {
    rot6d: [f64; 6],
    trans: [f64; 3],
    focal: f64,
}

impl TryFrom<FrameRepr> for CameraFrame {
    type Error = Error;

    fn try_from(r: FrameRepr) -> Result<Self> {
        let frame = CameraFrame {
            rot: Rot6D::from_slice(&r.rot6d),
            trans: Vector3::from(r.trans),
            focal: r.focal,
        };
        frame.validate()?;
        Ok(frame)
    }
}

impl From<CameraFrame> for FrameRepr {
    fn from(f: CameraFrame) -> Self {
        FrameRepr { rot6d: f.rot.to_array(), trans: f.trans.into(), focal: f.focal }
    }
}

impl CameraFrame {
    pub fn new(rot: Rot6D, trans: Vector3<f64>, focal: f64) -> Result<Self> {
        let frame = Self { rot, trans, focal };
        frame.validate()?;
        Ok(frame)
    }

    pub fn canonical() -> Self {
        Self { rot: Rot6D::identity(), trans: Vector3::zeros(), focal: CANONICAL_FOCAL }
    }

    pub fn from_matrix(rotation: &Matrix3<f64>, trans: Vector3<f64>, focal: f64) -> Self {
        Self { rot: matrix_to_rot6d_unchecked(rotation), trans, focal }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::InvalidTrajectory(format!("focal must be positive, got {}", self.focal)));
        }
        if !self.trans.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite translation".into()));
        }
        self.rot.to_matrix()?;
        Ok(())
    }

    /// Rotation matrix. Frames are validated on construction, so this cannot fail
    /// for frames built through the public constructors.
    pub fn rotation(&self) -> Matrix3<f64> {
        self.rot.to_matrix().expect("validated frame")
    }

    /// Camera-to-world 4×4 matrix, row-major.
    pub fn c2w(&self) -> [f64; 16] {
        let r = self.rotation();
        let t = self.trans;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    /// Horizontal field of view in degrees.
    pub fn fov_deg(&self) -> f64 {
        2.0 * (0.5 / self.focal).atan().to_degrees()
    }

    /// Largest of translation distance and geodesic angle (radians) to `other`.
    pub fn pose_gap(&self, other: &CameraFrame) -> f64 {
        let dt = (self.trans - other.trans).norm();
        let da = geodesic_angle(&self.rotation(), &other.rotation());
        dt.max(da)
    }
}

/// An ordered sequence of at least two frames with a total duration in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajRepr")]
pub struct Trajectory {
    duration_s: f64,
    frames: Vec<CameraFrame>,
}

#[derive(Deserialize)]
struct TrajRepr {
    duration_s: f64,
    frames: Vec<CameraFrame>,
}

impl TryFrom<TrajRepr> for Trajectory {
    type Error = Error;

    fn try_from(r: TrajRepr) -> Result<Self> {
        Trajectory::new(r.frames, r.duration_s)
    }
}

impl Trajectory {
    pub fn new(frames: Vec<CameraFrame>, duration_s: f64) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidTrajectory(format!("need at least 2 frames, got {}", frames.len())));
        }
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(Error::InvalidTrajectory(format!("duration must be positive, got {duration_s}")));
        }
        for f in &frames {
            f.validate()?;
        }
        Ok(Self { duration_s, frames })
    }

    pub fn frames(&self) -> &[CameraFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn first(&self) -> &CameraFrame {
        &self.frames[0]
    }

    pub fn last(&self) -> &CameraFrame {
        self.frames.last().expect("non-empty")
    }

    /// Seconds between consecutive frames.
    pub fn frame_dt(&self) -> f64 {
        self.duration_s / (self.frames.len() - 1) as f64
    }

    pub fn with_duration(&self, duration_s: f64) -> Result<Self> {
        Trajectory::new(self.frames.clone(), duration_s)
    }

    pub fn into_frames(self) -> Vec<CameraFrame> {
        self.frames
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Per-step velocities: (linear in units/s, angular in rad/s), `M − 1` entries.
pub fn frame_velocities(traj: &Trajectory) -> Vec<(Vector3<f64>, f64)> {
    let dt = traj.frame_dt();
    traj.frames
        .windows(2)
        .map(|w| {
            let lin = (w[1].trans - w[0].trans) / dt;
            let ang = geodesic_angle(&w[0].rotation(), &w[1].rotation()) / dt;
            (lin, ang)
        })
        .collect()
}

/// Resamples to `count` frames uniformly spaced in time; endpoints are kept bit-exact.
pub fn resample(traj: &Trajectory, count: usize) -> Result<Trajectory> {
    if count < 2 {
        return Err(Error::InvalidTrajectory(format!("resample target must be ≥ 2, got {count}")));
    }
    let m = traj.len();
    if count == m {
        return Ok(traj.clone());
    }
    let frames = &traj.frames;
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        if j == 0 {
            out.push(frames[0]);
            continue;
        }
        if j == count - 1 {
            out.push(frames[m - 1]);
            continue;
        }
        let u = j as f64 * (m - 1) as f64 / (count - 1) as f64;
        let i = (u.floor() as usize).min(m - 2);
        let s = u - i as f64;
        let (f0, f1) = (&frames[i], &frames[i + 1]);
        let trans = f0.trans + (f1.trans - f0.trans) * s;
        let focal = f0.focal + (f1.focal - f0.focal) * s;
        let rot = slerp(&f0.rotation(), &f1.rotation(), s);
        out.push(CameraFrame::from_matrix(&rot, trans, focal));
    }
    Trajectory::new(out, traj.duration_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::rotation::axis_angle;
    use approx::assert_relative_eq;

    fn straight(n: usize, duration: f64, step: Vector3<f64>) -> Trajectory {
        let frames = (0..n)
            .map(|i| CameraFrame::from_matrix(&Matrix3::identity(), step * i as f64, CANONICAL_FOCAL))
            .collect();
        Trajectory::new(frames, duration).unwrap()
    }

    #[test]
    fn rejects_invalid() {
        assert!(Trajectory::new(vec![CameraFrame::canonical()], 1.0).is_err());
        assert!(Trajectory::new(vec![CameraFrame::canonical(); 2], 0.0).is_err());
        let mut bad = CameraFrame::canonical();
        bad.focal = -1.0;
        assert!(Trajectory::new(vec![CameraFrame::canonical(), bad], 1.0).is_err());
    }

    #[test]
    fn velocities() {
        let stat = Trajectory::new(vec![CameraFrame::canonical(); 10], 3.0).unwrap();
        assert!(frame_velocities(&stat).iter().all(|(l, a)| l.norm() == 0.0 && *a == 0.0));

        let two = straight(2, 1.0, Vector3::x());
        let v = frame_velocities(&two);
        assert_eq!(v.len(), 1);
        assert_relative_eq!(v[0].0, Vector3::x(), epsilon = 1e-15);

        let frames = (0..3)
            .map(|i| CameraFrame::from_matrix(&axis_angle(Vector3::y(), (10.0 * i as f64).to_radians()), Vector3::zeros(), 1.0))
            .collect();
        let yaw = Trajectory::new(frames, 0.5).unwrap();
        let expected = 10f64.to_radians() / 0.25;
        for (_, a) in frame_velocities(&yaw) {
            assert_relative_eq!(a, expected, epsilon = 1e-12);
        }
        assert_relative_eq!(expected, 0.698, epsilon = 5e-4);
    }

    #[test]
    fn resample_straight_and_identity() {
        let t = straight(2, 2.0, Vector3::new(4.0, 0.0, 0.0));
        let r = resample(&t, 5).unwrap();
        for (j, f) in r.frames().iter().enumerate() {
            assert_relative_eq!(f.trans.x, j as f64, epsilon = 1e-12);
        }
        assert_eq!(r.duration_s(), 2.0);
        assert_eq!(resample(&t, 2).unwrap(), t);
    }

    #[test]
    fn resample_yaw_midpoint() {
        let frames = vec![
            CameraFrame::canonical(),
            CameraFrame::from_matrix(&axis_angle(Vector3::y(), 90f64.to_radians()), Vector3::zeros(), CANONICAL_FOCAL),
        ];
        let t = Trajectory::new(frames, 1.0).unwrap();
        let r = resample(&t, 3).unwrap();
        assert_relative_eq!(r.frames()[1].rotation(), axis_angle(Vector3::y(), 45f64.to_radians()), epsilon = 1e-12);
        assert_eq!(r.frames()[0], t.frames()[0]);
        assert_eq!(r.frames()[2], t.frames()[1]);
    }

    #[test]
    fn json_round_trip_and_schema() {
        let t = straight(3, 1.5, Vector3::new(0.1, -0.2, 0.3));
        let json = t.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["frames"][0]["rot6d"].as_array().unwrap().len(), 6);
        assert_eq!(v["frames"][0]["trans"].as_array().unwrap().len(), 3);
        assert!(v["frames"][0]["focal"].is_number());
        assert_eq!(Trajectory::from_json(&json).unwrap(), t);
        assert!(Trajectory::from_json(r#"{"duration_s":1.0,"frames":[]}"#).is_err());
    }
}
