use serde::{Deserialize, Serialize};

use super::rotation::geodesic_angle;
use super::trajectory::Trajectory;
use crate::error::{Error, Result};

/// Translation MSE in scene units² and rotation MSE in degrees².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMse {
    pub translation: f64,
    pub rotation: f64,
}

pub fn trajectory_mse(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryMse> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let (mut t, mut r) = (0.0, 0.0);
    for (fa, fb) in a.frames().iter().zip(b.frames()) {
        t += (fa.trans - fb.trans).norm_squared();
        r += geodesic_angle(&fa.rotation(), &fb.rotation()).to_degrees().powi(2);
    }
    Ok(TrajectoryMse { translation: t / n, rotation: r / n })
}
