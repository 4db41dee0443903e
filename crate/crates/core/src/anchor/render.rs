use serde::{Deserialize, Serialize};

use super::jet::{Jet, Scalar, CAMERA_PARAMS};
use super::scene::Blob;
use crate::camera::CameraFrame;

pub const RASTER_SIZE: usize = 32;
/// Depth below which blobs fade out.
const NEAR: f64 = 0.05;
/// Softness of the near-plane gate and depth floor.
const DEPTH_SOFTNESS: f64 = 0.02;

/// `height × width × 3` image, row-major, channels last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster<S = f64> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<S>,
}

impl Raster<Jet> {
    pub fn values(&self) -> Raster<f64> {
        Raster { width: self.width, height: self.height, data: self.data.iter().map(|j| j.v).collect() }
    }
}

/// Camera parameters as 10 scalars: rot6d columns, centre, focal.
pub fn camera_params(c: &CameraFrame) -> [f64; CAMERA_PARAMS] {
    let r = c.rot.to_array();
    [r[0], r[1], r[2], r[3], r[4], r[5], c.trans.x, c.trans.y, c.trans.z, c.focal]
}

fn cross<S: Scalar>(a: [S; 3], b: [S; 3]) -> [S; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot<S: Scalar>(a: [S; 3], b: [S; 3]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit<S: Scalar>(a: [S; 3]) -> [S; 3] {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Gram–Schmidt columns of the camera-to-world rotation.
fn rotation_columns<S: Scalar>(p: &[S; CAMERA_PARAMS]) -> [[S; 3]; 3] {
    let c1 = unit([p[0], p[1], p[2]]);
    let b = [p[3], p[4], p[5]];
    let k = dot(c1, b);
    let c2 = unit([b[0] - k * c1[0], b[1] - k * c1[1], b[2] - k * c1[2]]);
    [c1, c2, cross(c1, c2)]
}

/// Splats Gaussian blobs through a pinhole camera. Smooth in every camera parameter;
/// blobs behind the camera are faded out by a sigmoid gate rather than clipped.
pub fn render_params<S: Scalar>(content: &[Blob], p: &[S; CAMERA_PARAMS], resolution: usize) -> Raster<S> {
    let (w, h) = (resolution, resolution);
    let mut data = vec![S::cst(0.0); w * h * 3];
    let cols = rotation_columns(p);
    let focal = p[9];
    for blob in content {
        let rel = [S::cst(blob.center[0]) - p[6], S::cst(blob.center[1]) - p[7], S::cst(blob.center[2]) - p[8]];
        // world → camera is Rᵀ: coordinates are projections onto the columns
        let (x, y, z) = (dot(cols[0], rel), dot(cols[1], rel), dot(cols[2], rel));
        let depth = -z;
        let gate = ((depth - S::cst(NEAR)).scale(1.0 / DEPTH_SOFTNESS)).sigmoid();
        let safe = depth.scale(1.0 / DEPTH_SOFTNESS).softplus().scale(DEPTH_SOFTNESS) + S::cst(1e-3);
        let u = focal * x / safe;
        let v = focal * y / safe;
        let px = (u + S::cst(0.5)).scale(w as f64) - S::cst(0.5);
        let py = (S::cst(0.5) - v).scale(h as f64) - S::cst(0.5);
        let sigma = focal * S::cst(blob.radius * w as f64) / safe;
        let inv_two_var = S::cst(0.5) / (sigma * sigma + S::cst(0.25));
        for row in 0..h {
            let dy = S::cst(row as f64) - py;
            let dy2 = dy * dy;
            for col in 0..w {
                let dx = S::cst(col as f64) - px;
                let weight = gate * (-(dx * dx + dy2) * inv_two_var).exp();
                if weight.value() < 1e-300 {
                    continue;
                }
                let base = (row * w + col) * 3;
                for ch in 0..3 {
                    data[base + ch] = data[base + ch] + weight.scale(blob.color[ch]);
                }
            }
        }
    }
    Raster { width: w, height: h, data }
}

/// Plain render of `content` seen from `camera`.
pub fn toy_render(content: &[Blob], camera: &CameraFrame, resolution: usize) -> Raster {
    render_params(content, &camera_params(camera), resolution)
}

/// Render carrying derivatives with respect to the 10 camera parameters.
pub fn toy_render_jet(content: &[Blob], camera: &CameraFrame, resolution: usize) -> Raster<Jet> {
    let p = camera_params(camera);
    let jets: [Jet; CAMERA_PARAMS] = std::array::from_fn(|i| Jet::var(p[i], i));
    render_params(content, &jets, resolution)
}
