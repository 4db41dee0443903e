//! Camera poses, trajectories, rigid/similarity transforms and trajectory metrics.

mod export;
mod metrics;
mod rotation;
mod trajectory;
mod transform;

pub use export::{CameraPath, CameraPathFrame};
pub use metrics::{trajectory_mse, TrajectoryMse};
pub use rotation::{
    axis_angle, geodesic_angle, matrix_to_rot6d, rot6d_to_matrix, rotation_between, rotation_error, slerp, Rot6D,
};
pub use trajectory::{frame_velocities, resample, CameraFrame, Trajectory, CANONICAL_FOCAL};
pub use transform::{align_endpoint, apply_similarity, rigid_between, scale_focal, Endpoint, SimilarityTransform};
