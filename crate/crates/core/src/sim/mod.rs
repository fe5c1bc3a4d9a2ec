//! Synthetic stand-in for the keypoint proposal network: grid-structured
//! proposals with controlled geometric noise and mis-calibrated raw
//! confidences, so the culling ablations run without any trained model.
//!
//! Two scene flavors exist. The dense flavor gives every non-outlier grid
//! cell a noisy copy of the ground-truth keypoints, which exercises the
//! argmax-vs-scored-culling contrast. The object-local flavor restricts
//! genuine proposals to the cells actually covering the object's keypoints
//! and fills the rest of the grid with confidently wrong decoys, which is
//! what stresses consensus baselines as the top-k pool deepens.

mod experiment;

pub use experiment::{
    run_experiment, with_thread_cap, CorrelationReport, ExperimentConfig, ExperimentReport,
    RunOptions, SceneKind, StrategyConfig, StrategyRow,
};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::confidence::{proposal_confidence, ConfidenceParams, GridCellTruth};
use crate::culling::{GridOrigin, KeypointProposal};
use crate::error::{Error, Result};
use crate::geometry::{
    cuboid_keypoints, project_point, CameraIntrinsics, Mat3, MeshModel, Pixel2, Pose, Vec3,
};

/// Output grid geometry: one proposal per cell per scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub scales: Vec<usize>,
    pub image_size: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { scales: vec![13, 26, 52], image_size: 416 }
    }
}

impl GridSpec {
    pub fn total_cells(&self) -> usize {
        self.scales.iter().map(|s| s * s).sum()
    }

    pub fn cell_size(&self, scale_index: usize) -> f64 {
        self.image_size as f64 / self.scales[scale_index] as f64
    }

    fn check_cell(&self, scale_index: usize, row: usize, col: usize) -> Result<()> {
        let side = *self
            .scales
            .get(scale_index)
            .ok_or(Error::CellOutOfRange { side: 0, row, col })?;
        if row >= side || col >= side {
            return Err(Error::CellOutOfRange { side, row, col });
        }
        Ok(())
    }
}

/// Keypoints in image coordinates to offsets from a cell's top-left corner,
/// in cell units.
pub fn encode_cell_offsets(
    kps: &[Pixel2],
    grid: &GridSpec,
    scale_index: usize,
    row: usize,
    col: usize,
) -> Result<Vec<Pixel2>> {
    grid.check_cell(scale_index, row, col)?;
    let cell = grid.cell_size(scale_index);
    Ok(kps
        .iter()
        .map(|p| Pixel2::new(p.x / cell - col as f64, p.y / cell - row as f64))
        .collect())
}

/// Inverse of [`encode_cell_offsets`].
pub fn decode_cell_offsets(
    offsets: &[Pixel2],
    grid: &GridSpec,
    scale_index: usize,
    row: usize,
    col: usize,
) -> Result<Vec<Pixel2>> {
    grid.check_cell(scale_index, row, col)?;
    let cell = grid.cell_size(scale_index);
    Ok(offsets
        .iter()
        .map(|o| Pixel2::new((o.x + col as f64) * cell, (o.y + row as f64) * cell))
        .collect())
}

/// Monotone distortion applied to ground-truth confidences before noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Miscalibration {
    None,
    /// `c^gamma`; gamma < 1 inflates mid-range confidences.
    Power { gamma: f64 },
    /// `1 / (1 + exp(-a (c - b)))`.
    Logistic { a: f64, b: f64 },
}

impl Miscalibration {
    pub fn apply(&self, c: f64) -> f64 {
        match *self {
            Miscalibration::None => c,
            Miscalibration::Power { gamma } => c.max(0.0).powf(gamma),
            Miscalibration::Logistic { a, b } => 1.0 / (1.0 + (-a * (c - b)).exp()),
        }
    }
}

/// Noise and mis-calibration model of the synthetic backbone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseModel {
    pub keypoint_sigma_px: f64,
    pub outlier_fraction: f64,
    pub confidence_noise_sigma: f64,
    pub miscalibration: Miscalibration,
    pub seed: u64,
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        if self.keypoint_sigma_px < 0.0
            || !(0.0..=1.0).contains(&self.outlier_fraction)
            || self.confidence_noise_sigma < 0.0
        {
            return Err(Error::Config(format!("invalid noise model: {self:?}")));
        }
        Ok(())
    }
}

/// Everything scene synthesis needs besides mesh, pose, and camera.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub grid: GridSpec,
    pub noise: NoiseModel,
    pub confidence: ConfidenceParams,
    pub class_id: usize,
    pub class_count: usize,
}

/// A synthesized proposal tensor: proposals and per-cell ground truth in
/// grid order (scales outer, rows, then columns), plus the ground-truth
/// keypoint projections.
#[derive(Debug, Clone)]
pub struct Scene {
    pub proposals: Vec<KeypointProposal>,
    pub truths: Vec<GridCellTruth>,
    pub gt_keypoints: Vec<Pixel2>,
}

/// Composes a random rotation (axis uniform on the sphere, angle half-normal
/// with `rot_sigma_rad`) and adds per-axis Gaussian translation noise.
pub fn perturb_pose(pose: &Pose, rot_sigma_rad: f64, trans_sigma: f64, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis_arr: [f64; 3] = UnitSphere.sample(&mut rng);
    let axis = Vec3::new(axis_arr[0], axis_arr[1], axis_arr[2]);
    let angle: f64 = Normal::new(0.0, rot_sigma_rad.max(0.0))
        .expect("finite sigma")
        .sample(&mut rng);
    let delta = crate::geometry::axis_angle_to_rotation(axis, angle.abs()).expect("unit axis");
    let tn = Normal::new(0.0, trans_sigma.max(0.0)).expect("finite sigma");
    let dt = Vec3::new(tn.sample(&mut rng), tn.sample(&mut rng), tn.sample(&mut rng));
    Pose::new(pose.rotation() * delta, pose.translation() + dt)
        .expect("perturbation preserves pose invariants")
}

/// Uniformly distributed rotation matrix (normalized 4-normal quaternion).
pub fn random_rotation(rng: &mut impl Rng) -> Mat3 {
    let q: [f64; 4] = std::array::from_fn(|_| {
        rand_distr::StandardNormal.sample_iter(&mut *rng).next().unwrap()
    });
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z),       2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),       1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),       2.0 * (y * z + w * x),       1.0 - 2.0 * (x * x + y * y),
    )
}

/// Ground-truth pose sampler: uniform rotation, depth uniform in diameters,
/// and the object center aimed at a uniform pixel inside the margin box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSampler {
    pub depth_range_diameters: [f64; 2],
    /// Fraction of the image kept clear on each side when aiming the center.
    pub margin_fraction: f64,
}

impl Default for PoseSampler {
    fn default() -> Self {
        Self { depth_range_diameters: [4.0, 10.0], margin_fraction: 0.3 }
    }
}

/// Draws a pose whose 9 cuboid keypoints all project inside the image;
/// fails after 500 rejected draws.
pub fn sample_gt_pose(
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    sampler: &PoseSampler,
    rng: &mut impl Rng,
) -> Result<Pose> {
    let kps = cuboid_keypoints(mesh);
    let center = kps[8];
    let diam = mesh.diameter();
    let (w, h) = (k.image_width as f64, k.image_height as f64);
    let m = sampler.margin_fraction;
    for _ in 0..500 {
        let rot = random_rotation(rng);
        let depth = diam
            * (sampler.depth_range_diameters[0]
                + (sampler.depth_range_diameters[1] - sampler.depth_range_diameters[0])
                    * rng.random::<f64>());
        let u = w * (m + (1.0 - 2.0 * m) * rng.random::<f64>());
        let v = h * (m + (1.0 - 2.0 * m) * rng.random::<f64>());
        let target = Vec3::new((u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth);
        let t = target - rot * center;
        let pose = Pose::new(rot, t).expect("rotation is orthonormal by construction");
        let inside = kps.iter().all(|x| {
            project_point(k, &pose, x).map(|p| k.contains_pixel(&p)).unwrap_or(false)
        });
        if inside {
            return Ok(pose);
        }
    }
    Err(Error::KeypointsOutOfImage(
        "pose sampler could not fit the object in frame; widen the margin or depth range".into(),
    ))
}

/// Dense synthesis: every cell holds the ground-truth keypoints plus
/// Gaussian noise, except outlier cells drawn with `outlier_fraction`,
/// whose keypoints are uniform over the image. Raw confidence is the
/// miscalibrated ground-truth confidence plus clamped Gaussian noise.
pub fn synthesize_scene(
    mesh: &MeshModel,
    gt_pose: &Pose,
    k: &CameraIntrinsics,
    cfg: &SceneConfig,
) -> Result<Scene> {
    cfg.noise.validate()?;
    let gt_px = project_gt_keypoints(mesh, gt_pose, k, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise.seed);
    let mut scene = Scene {
        proposals: Vec::with_capacity(cfg.grid.total_cells()),
        truths: Vec::with_capacity(cfg.grid.total_cells()),
        gt_keypoints: gt_px.clone(),
    };
    for_each_cell(&cfg.grid, |scale_index, row, col| {
        let outlier = rng.random::<f64>() < cfg.noise.outlier_fraction;
        let kps = if outlier {
            uniform_keypoints(gt_px.len(), k, &mut rng)
        } else {
            noisy_keypoints(&gt_px, cfg.noise.keypoint_sigma_px, &mut rng)
        };
        let gt_conf = proposal_confidence(&kps, &gt_px, &cfg.confidence)?;
        let raw = noisy_confidence(gt_conf, &cfg.noise, &mut rng);
        push_cell(&mut scene, cfg, &gt_px, scale_index, row, col, kps, gt_conf, raw);
        Ok(())
    })?;
    Ok(scene)
}

/// Object-local synthesis for the consensus-robustness ablation.
///
/// Cells covering a ground-truth keypoint projection are the only candidates
/// for genuine proposals, and each is spoiled with `outlier_fraction`. Every
/// other cell is a decoy: uniform keypoints with a raw confidence drawn from
/// the miscalibrated band below `decoy_confidence_ceiling`, emulating
/// confidently wrong detections on background structures.
pub fn synthesize_scene_object_local(
    mesh: &MeshModel,
    gt_pose: &Pose,
    k: &CameraIntrinsics,
    cfg: &SceneConfig,
    decoy_confidence_ceiling: f64,
) -> Result<Scene> {
    cfg.noise.validate()?;
    if !(0.0..=1.0).contains(&decoy_confidence_ceiling) {
        return Err(Error::Config(format!(
            "decoy confidence ceiling {decoy_confidence_ceiling} outside [0,1]"
        )));
    }
    let gt_px = project_gt_keypoints(mesh, gt_pose, k, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.noise.seed);
    let mut scene = Scene {
        proposals: Vec::with_capacity(cfg.grid.total_cells()),
        truths: Vec::with_capacity(cfg.grid.total_cells()),
        gt_keypoints: gt_px.clone(),
    };
    for_each_cell(&cfg.grid, |scale_index, row, col| {
        let cell = cfg.grid.cell_size(scale_index);
        let covers_keypoint = gt_px.iter().any(|p| {
            (p.x / cell).floor() as usize == col && (p.y / cell).floor() as usize == row
        });
        let genuine = covers_keypoint && rng.random::<f64>() >= cfg.noise.outlier_fraction;
        let (kps, raw) = if genuine {
            let kps = noisy_keypoints(&gt_px, cfg.noise.keypoint_sigma_px, &mut rng);
            let gt_conf = proposal_confidence(&kps, &gt_px, &cfg.confidence)?;
            (kps, noisy_confidence(gt_conf, &cfg.noise, &mut rng))
        } else {
            let kps = uniform_keypoints(gt_px.len(), k, &mut rng);
            let fake = rng.random::<f64>() * decoy_confidence_ceiling;
            (kps, noisy_confidence(fake, &cfg.noise, &mut rng))
        };
        let gt_conf = proposal_confidence(&kps, &gt_px, &cfg.confidence)?;
        push_cell(&mut scene, cfg, &gt_px, scale_index, row, col, kps, gt_conf, raw);
        Ok(())
    })?;
    Ok(scene)
}

fn project_gt_keypoints(
    mesh: &MeshModel,
    gt_pose: &Pose,
    k: &CameraIntrinsics,
    cfg: &SceneConfig,
) -> Result<Vec<Pixel2>> {
    if cfg.class_id >= cfg.class_count {
        return Err(Error::Config(format!(
            "class id {} outside class count {}",
            cfg.class_id, cfg.class_count
        )));
    }
    cuboid_keypoints(mesh)
        .iter()
        .map(|x| {
            let p = project_point(k, gt_pose, x).map_err(|e| {
                Error::KeypointsOutOfImage(format!("keypoint behind camera: {e}"))
            })?;
            if !k.contains_pixel(&p) {
                return Err(Error::KeypointsOutOfImage(format!(
                    "keypoint projects to ({:.1}, {:.1})",
                    p.x, p.y
                )));
            }
            Ok(p)
        })
        .collect()
}

fn for_each_cell(
    grid: &GridSpec,
    mut f: impl FnMut(usize, usize, usize) -> Result<()>,
) -> Result<()> {
    for (scale_index, &side) in grid.scales.iter().enumerate() {
        for row in 0..side {
            for col in 0..side {
                f(scale_index, row, col)?;
            }
        }
    }
    Ok(())
}

fn noisy_keypoints(gt_px: &[Pixel2], sigma: f64, rng: &mut impl Rng) -> Vec<Pixel2> {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    gt_px
        .iter()
        .map(|p| Pixel2::new(p.x + normal.sample(rng), p.y + normal.sample(rng)))
        .collect()
}

fn uniform_keypoints(n: usize, k: &CameraIntrinsics, rng: &mut impl Rng) -> Vec<Pixel2> {
    (0..n)
        .map(|_| {
            Pixel2::new(
                rng.random::<f64>() * k.image_width as f64,
                rng.random::<f64>() * k.image_height as f64,
            )
        })
        .collect()
}

fn noisy_confidence(gt_conf: f64, noise: &NoiseModel, rng: &mut impl Rng) -> f64 {
    let base = noise.miscalibration.apply(gt_conf);
    let eps: f64 = Normal::new(0.0, noise.confidence_noise_sigma.max(0.0))
        .expect("finite sigma")
        .sample(rng);
    (base + eps).clamp(0.0, 1.0)
}

#[allow(clippy::too_many_arguments)]
fn push_cell(
    scene: &mut Scene,
    cfg: &SceneConfig,
    gt_px: &[Pixel2],
    scale_index: usize,
    row: usize,
    col: usize,
    kps: Vec<Pixel2>,
    gt_conf: f64,
    raw: f64,
) {
    let cell = cfg.grid.cell_size(scale_index);
    let centroid = gt_px[gt_px.len() - 1];
    let is_object = (centroid.x / cell).floor() as usize == col
        && (centroid.y / cell).floor() as usize == row;
    let mut one_hot = vec![0.0; cfg.class_count];
    one_hot[cfg.class_id] = 1.0;
    scene.proposals.push(KeypointProposal {
        keypoints: kps,
        raw_confidence: raw,
        class_scores: one_hot.clone(),
        grid_origin: GridOrigin { scale: scale_index, row, col },
    });
    scene.truths.push(GridCellTruth {
        is_object,
        gt_keypoints: gt_px.to_vec(),
        gt_confidence: gt_conf,
        gt_class: one_hot,
    });
}

/// SplitMix64 step, used to derive independent per-trial seeds.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
