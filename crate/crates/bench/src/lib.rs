//! Shared fixtures for the pipeline benchmarks.

use cullkit_core::geometry::{make_box_mesh, Mat3, MeshModel, Vec3};
use cullkit_core::{CameraIntrinsics, Pose};

pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(420.0, 420.0, 208.0, 208.0, 416, 416).unwrap()
}

/// Desk-scale box with a vertex density comparable to decimated scan meshes.
pub fn mesh(subdiv: usize) -> MeshModel {
    make_box_mesh(Vec3::zeros(), Vec3::new(0.2, 0.18, 0.15), subdiv)
}

pub fn front_pose(depth: f64) -> Pose {
    Pose::new(Mat3::identity(), Vec3::new(0.01, -0.02, depth)).unwrap()
}
