//! File ingestion and persistence: PLY meshes, pose and intrinsics text
//! files, dataset indexes, and the versioned proposal JSON schema.

mod dataset;
mod ply;
mod pose_file;
mod proposals;

pub use dataset::{DatasetClass, DatasetImage, DatasetIndex};
pub use ply::{load_ply, save_ply_ascii};
pub use pose_file::{
    load_intrinsics, load_pose_annotation, save_intrinsics, save_pose_annotation,
};
pub use proposals::{load_proposals, save_proposals, PROPOSAL_SCHEMA_VERSION};
