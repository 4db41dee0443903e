//! Camera-path export consumed by external radiance-field viewers.

use serde::{Deserialize, Serialize};

use nalgebra::{Matrix3, Vector3};

use super::rotation::matrix_to_rot6d;
use super::trajectory::{CameraFrame, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPath {
    pub fps: f64,
    pub frames: Vec<CameraPathFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPathFrame {
    /// Row-major 4×4 camera-to-world matrix.
    pub c2w: Vec<f64>,
    pub fov_deg: f64,
}

impl CameraPath {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            fps: 1.0 / traj.frame_dt(),
            frames: traj
                .frames()
                .iter()
                .map(|f| CameraPathFrame { c2w: f.c2w().to_vec(), fov_deg: f.fov_deg() })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("camera path serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Inverse of [`CameraPath::from_trajectory`]: duration is `(n − 1)/fps` and the focal
    /// length is recovered from the field of view.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("fps must be positive, got {}", self.fps)));
        }
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                if f.c2w.len() != 16 {
                    return Err(Error::InvalidTrajectory(format!("frame {i}: c2w needs 16 values, got {}", f.c2w.len())));
                }
                if !(f.fov_deg > 0.0 && f.fov_deg < 180.0) {
                    return Err(Error::InvalidTrajectory(format!("frame {i}: fov_deg {} outside (0, 180)", f.fov_deg)));
                }
                let m = &f.c2w;
                let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
                let focal = 0.5 / (f.fov_deg.to_radians() / 2.0).tan();
                CameraFrame::new(matrix_to_rot6d(&r)?, Vector3::new(m[3], m[7], m[11]), focal)
            })
            .collect::<Result<Vec<_>>>()?;
        let n = frames.len();
        Trajectory::new(frames, n.saturating_sub(1) as f64 / self.fps)
    }
}
