use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::{matrix_to_rot6d_unchecked, Rot6D};
use super::trajectory::{CameraFrame, Trajectory};
use crate::error::{Error, Result};

/// `x ↦ scale · R x + t`, acting on camera centres; orientations are pre-multiplied by `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Rot6D,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl SimilarityTransform {
    pub fn new(rotation: Rot6D, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InfeasibleComposition(format!("similarity scale must be positive, got {scale}")));
        }
        rotation.to_matrix()?;
        Ok(Self { rotation, translation, scale })
    }

    pub fn identity() -> Self {
        Self { rotation: Rot6D::identity(), translation: Vector3::zeros(), scale: 1.0 }
    }

    pub fn rigid(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: matrix_to_rot6d_unchecked(rotation), translation, scale: 1.0 }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.rotation.to_matrix().expect("validated rotation")
    }

    pub fn inverse(&self) -> Self {
        let rt = self.matrix().transpose();
        Self {
            rotation: matrix_to_rot6d_unchecked(&rt),
            translation: -(rt * self.translation) / self.scale,
            scale: 1.0 / self.scale,
        }
    }

    pub fn apply_frame(&self, f: &CameraFrame) -> CameraFrame {
        let r = self.matrix();
        CameraFrame::from_matrix(&(r * f.rotation()), r * f.trans * self.scale + self.translation, f.focal)
    }
}

pub fn apply_similarity(traj: &Trajectory, s: &SimilarityTransform) -> Trajectory {
    let frames = traj.frames().iter().map(|f| s.apply_frame(f)).collect();
    Trajectory::new(frames, traj.duration_s()).expect("similarity preserves validity")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Start,
    End,
}

/// Rigid motion that maps `from`'s pose onto `to`'s pose.
pub fn rigid_between(from: &CameraFrame, to: &CameraFrame) -> SimilarityTransform {
    let r = to.rotation() * from.rotation().transpose();
    SimilarityTransform::rigid(&r, to.trans - r * from.trans)
}

/// Moves the whole path rigidly so the chosen endpoint lands on `target`'s pose.
/// The endpoint is then written bit-exactly to the target pose; focal lengths are untouched.
pub fn align_endpoint(traj: &Trajectory, target: &CameraFrame, which: Endpoint) -> Trajectory {
    let anchor = match which {
        Endpoint::Start => traj.first(),
        Endpoint::End => traj.last(),
    };
    let s = rigid_between(anchor, target);
    let mut frames = apply_similarity(traj, &s).into_frames();
    let idx = match which {
        Endpoint::Start => 0,
        Endpoint::End => frames.len() - 1,
    };
    frames[idx].rot = target.rot.normalized().expect("valid target");
    frames[idx].trans = target.trans;
    Trajectory::new(frames, traj.duration_s()).expect("rigid motion preserves validity")
}

/// Multiplies every focal length by `ratio` (zoom profiles are geometric, so shape is kept).
pub fn scale_focal(traj: &Trajectory, ratio: f64) -> Trajectory {
    let frames = traj
        .frames()
        .iter()
        .map(|f| CameraFrame { focal: f.focal * ratio, ..*f })
        .collect();
    Trajectory::new(frames, traj.duration_s()).expect("positive ratio")
}
