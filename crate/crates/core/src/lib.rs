//! Geometric and statistical core for calibrated pose-proposal culling.
//!
//! The crate covers the full single-object pose pipeline around a pluggable
//! proposal scorer: pose recovery from 2D-3D keypoint correspondences,
//! exponential keypoint confidences and their pose-aware calibrated
//! counterpart, silhouette rendering and patch assembly, proposal culling
//! strategies (argmax, scored top-k, RANSAC, NMS), pose-accuracy metrics with
//! z-bias correction, and a synthetic proposal harness that reproduces the
//! culling ablations without any trained network.

pub use image;

pub mod confidence;
pub mod culling;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pnp;
pub mod report;
pub mod silhouette;
pub mod sim;

pub use confidence::{
    calibrated_confidence, confidence_of_distance, proposal_confidence, vertex_distance,
    ConfidenceParams, GridCellTruth,
};
pub use culling::{
    cull_argmax, cull_with_scorer, nms_poses, ransac_cull, top_k, CullOptions, KeypointProposal,
    ProposalScorer, ScoredProposal,
};
pub use error::{Error, Result};
pub use geometry::{
    cuboid_keypoints, mesh_diameter, project_point, CameraIntrinsics, MeshModel, Pixel2, Pose,
    Vec3,
};
pub use metrics::{
    add_error, addi_correct, adi_error, apply_z_bias, fit_z_bias, BiasTable, MeshRegistry,
    PoseInstance,
};
pub use pnp::{epnp_solve, horn_align, reprojection_rms, Correspondence, PnPSolution};
pub use silhouette::{assemble_patch, render_mask, tight_bbox, BinaryMask, MaskMode, Patch4};
pub use sim::{run_experiment, ExperimentConfig, ExperimentReport, RunOptions};
