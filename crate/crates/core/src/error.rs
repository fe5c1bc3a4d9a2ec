//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by the pose-culling toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A point has camera-frame depth at or below the projection cutoff.
    #[error("point depth {depth:.6e} is not positive")]
    NonPositiveDepth { depth: f64 },

    /// A specific mesh vertex has non-positive depth under some pose.
    #[error("vertex {index} has non-positive depth {depth:.6e}")]
    VertexBehindCamera { index: usize, depth: f64 },

    /// A rotation axis with zero length was supplied.
    #[error("rotation axis has zero length")]
    ZeroAxis,

    /// The input points do not constrain the requested solution.
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    /// No pose hypothesis places the object in front of the camera.
    #[error("no pose hypothesis yields positive mean depth")]
    BehindCamera,

    /// Paired inputs have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A loss over object cells was requested but no cell is marked object.
    #[error("no object cells present in loss input")]
    NoObjectCells,

    /// A predicted class vector is not a probability distribution.
    #[error("invalid class distribution: {0}")]
    InvalidDistribution(String),

    /// Too few mesh vertices project in front of the camera to render.
    #[error("all (or most) mesh vertices lie behind the camera")]
    AllVerticesBehindCamera,

    /// A mask operation needs at least one set pixel.
    #[error("mask contains no set pixels")]
    EmptyMask,

    /// Raster dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An operation over proposals received none.
    #[error("proposal set is empty")]
    EmptyProposalSet,

    /// Every proposal in the culling pipeline failed a stage.
    #[error("every proposal failed: {0}")]
    AllProposalsFailed(String),

    /// An external scoring process misbehaved.
    #[error("external scorer failed: {0}")]
    ScorerProcessFailed(String),

    /// RANSAC could not assemble a minimal consensus.
    #[error("no consensus found (best inlier count {best})")]
    NoConsensus { best: usize },

    /// A grid cell index lies outside its scale.
    #[error("cell ({row},{col}) out of range for a {side}x{side} grid")]
    CellOutOfRange { side: usize, row: usize, col: usize },

    /// Ground-truth keypoints do not all project inside the image.
    #[error("ground-truth keypoints project outside the image: {0}")]
    KeypointsOutOfImage(String),

    /// A file could not be parsed.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        /// 1-based line for text formats, 0 for binary payloads.
        line: usize,
        msg: String,
    },

    /// A file uses a feature this crate does not read.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    /// A loaded rotation matrix is too far from orthonormal to repair.
    #[error("rotation matrix fails orthonormality check (error {err:.3e})")]
    InvalidRotation { err: f64 },

    /// A pose violates its invariants.
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    /// Camera intrinsics violate their invariants.
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    /// A mesh violates its invariants.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A dataset index is inconsistent or references missing files.
    #[error("dataset: {0}")]
    Dataset(String),

    /// An experiment or culling configuration is invalid.
    #[error("config: {0}")]
    Config(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
