//! Proposal culling: top-k selection, pose recovery, pluggable scoring, and
//! the argmax / RANSAC baselines, plus NMS for the multi-object case.

use std::io::Read;
use std::process::{Command, Stdio};

use image::RgbImage;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::confidence::{calibrated_confidence, ConfidenceParams};
use crate::error::{Error, Result};
use crate::geometry::{cuboid_keypoints, CameraIntrinsics, MeshModel, Pixel2, Pose, Vec3};
use crate::pnp::{epnp_solve, Correspondence};
use crate::silhouette::{assemble_patch, render_mask, MaskMode, Patch4};

/// Where a proposal came from in the backbone's output grids; also the
/// deterministic tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GridOrigin {
    pub scale: usize,
    pub row: usize,
    pub col: usize,
}

/// One grid cell's output: n 2D keypoints, a raw confidence, class scores.
#[derive(Debug, Clone)]
pub struct KeypointProposal {
    pub keypoints: Vec<Pixel2>,
    pub raw_confidence: f64,
    pub class_scores: Vec<f64>,
    pub grid_origin: GridOrigin,
}

/// A proposal joined with its recovered pose and calibrated confidence.
#[derive(Debug, Clone)]
pub struct ScoredProposal {
    pub proposal: KeypointProposal,
    pub pose: Pose,
    pub calibrated_confidence: f64,
    pub patch: Option<Patch4>,
}

/// Everything a scorer may inspect for one proposal.
pub struct ScoreContext<'a> {
    pub patch: &'a Patch4,
    pub pose: &'a Pose,
    pub proposal: &'a KeypointProposal,
    pub mesh: &'a MeshModel,
    pub intrinsics: &'a CameraIntrinsics,
}

/// Scoring contract: a confidence in [0, 1], deterministic for identical
/// input (and seed, where one applies).
pub trait ProposalScorer {
    fn name(&self) -> &str;
    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64>;
}

/// Pipeline knobs shared by the culling entry points.
#[derive(Debug, Clone)]
pub struct CullOptions {
    pub mask_mode: MaskMode,
    /// Feed all 9 cuboid keypoints to the solver, or drop the centroid.
    pub use_centroid_keypoint: bool,
    /// Zero RGB outside the mask before scoring.
    pub zero_rgb_outside_mask: bool,
}

impl Default for CullOptions {
    fn default() -> Self {
        Self {
            mask_mode: MaskMode::TriangleFill,
            use_centroid_keypoint: true,
            zero_rgb_outside_mask: false,
        }
    }
}

impl CullOptions {
    /// The solver-side 3D keypoints for a mesh under these options.
    pub fn keypoints3d(&self, mesh: &MeshModel) -> Vec<Vec3> {
        let kps = cuboid_keypoints(mesh);
        let n = if self.use_centroid_keypoint { 9 } else { 8 };
        kps[..n].to_vec()
    }
}

/// The `k` proposals with highest raw confidence, descending; ties resolve
/// by grid origin. Returns fewer when the input is smaller.
pub fn top_k(proposals: &[KeypointProposal], k: usize) -> Result<Vec<KeypointProposal>> {
    if proposals.is_empty() {
        return Err(Error::EmptyProposalSet);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("top_k needs k >= 1".into()));
    }
    let mut sorted: Vec<KeypointProposal> = proposals.to_vec();
    sorted.sort_by(|a, b| {
        b.raw_confidence
            .total_cmp(&a.raw_confidence)
            .then_with(|| a.grid_origin.cmp(&b.grid_origin))
    });
    sorted.truncate(k);
    Ok(sorted)
}

/// Pose from the single most raw-confident proposal; its calibrated
/// confidence field carries the raw confidence unchanged.
pub fn cull_argmax(
    proposals: &[KeypointProposal],
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    opts: &CullOptions,
) -> Result<ScoredProposal> {
    let best = top_k(proposals, 1)?.remove(0);
    let kp3d = opts.keypoints3d(mesh);
    let corrs = pair_keypoints(&kp3d, &best.keypoints)?;
    let sol = epnp_solve(&corrs, k)?;
    Ok(ScoredProposal {
        calibrated_confidence: best.raw_confidence,
        proposal: best,
        pose: sol.pose,
        patch: None,
    })
}

/// Ground-truth calibrated confidence as a scorer value: the stand-in for a
/// perfectly trained patch scorer.
pub fn oracle_score(
    mesh: &MeshModel,
    pred_pose: &Pose,
    gt_pose: &Pose,
    k: &CameraIntrinsics,
    params: &ConfidenceParams,
) -> Result<f64> {
    calibrated_confidence(mesh, pred_pose, gt_pose, k, params)
}

/// Full pipeline: top-k, pose per proposal, silhouette, patch, scorer, then
/// argmax on the calibrated confidences (ties: higher raw confidence, then
/// grid order). Proposals failing any stage are skipped with a logged
/// reason; only a fully failed set is an error.
pub fn cull_with_scorer(
    image: &RgbImage,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    proposals: &[KeypointProposal],
    k_top: usize,
    scorer: &dyn ProposalScorer,
    opts: &CullOptions,
) -> Result<ScoredProposal> {
    let tops = top_k(proposals, k_top)?;
    let kp3d = opts.keypoints3d(mesh);
    let mut candidates: Vec<ScoredProposal> = Vec::with_capacity(tops.len());
    let mut reasons: Vec<String> = Vec::new();

    for proposal in tops {
        match score_one(image, mesh, k, &kp3d, &proposal, scorer, opts) {
            Ok(scored) => candidates.push(scored),
            Err(e) => {
                log::debug!(
                    "skipping proposal at {:?}: {e}",
                    proposal.grid_origin
                );
                reasons.push(format!("{:?}: {e}", proposal.grid_origin));
            }
        }
    }

    candidates
        .into_iter()
        .max_by(|a, b| {
            a.calibrated_confidence
                .total_cmp(&b.calibrated_confidence)
                .then_with(|| a.proposal.raw_confidence.total_cmp(&b.proposal.raw_confidence))
                .then_with(|| b.proposal.grid_origin.cmp(&a.proposal.grid_origin))
        })
        .ok_or_else(|| Error::AllProposalsFailed(reasons.join("; ")))
}

fn score_one(
    image: &RgbImage,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    kp3d: &[Vec3],
    proposal: &KeypointProposal,
    scorer: &dyn ProposalScorer,
    opts: &CullOptions,
) -> Result<ScoredProposal> {
    let corrs = pair_keypoints(kp3d, &proposal.keypoints)?;
    let sol = epnp_solve(&corrs, k)?;
    let mask = render_mask(mesh, &sol.pose, k, opts.mask_mode)?;
    let mut patch = assemble_patch(image, &mask)?;
    if opts.zero_rgb_outside_mask {
        patch.rgb = patch.masked_rgb();
    }
    let score = scorer.score(&ScoreContext {
        patch: &patch,
        pose: &sol.pose,
        proposal,
        mesh,
        intrinsics: k,
    })?;
    if !(0.0..=1.0).contains(&score) || !score.is_finite() {
        return Err(Error::ScorerProcessFailed(format!(
            "scorer {} produced out-of-range value {score}",
            scorer.name()
        )));
    }
    Ok(ScoredProposal {
        proposal: proposal.clone(),
        pose: sol.pose,
        calibrated_confidence: score,
        patch: Some(patch),
    })
}

fn pair_keypoints(kp3d: &[Vec3], kp2d: &[Pixel2]) -> Result<Vec<Correspondence>> {
    if kp3d.len() != kp2d.len() {
        return Err(Error::LengthMismatch { left: kp3d.len(), right: kp2d.len() });
    }
    Ok(kp3d
        .iter()
        .zip(kp2d)
        .map(|(x, p)| Correspondence::new(*x, *p))
        .collect())
}

/// RANSAC baseline over the pooled top-k keypoints.
///
/// Per keypoint index the pool holds k candidates. Each iteration samples a
/// random 4-index minimal subset with one random candidate per index, solves
/// for a pose, and counts pooled candidates within `inlier_px` of their
/// reprojection; the best iteration's consensus set is refit. Deterministic
/// under `seed`. The returned calibrated confidence is the inlier fraction
/// and the carrier proposal is the raw-confidence argmax.
pub fn ransac_cull(
    proposals: &[KeypointProposal],
    k_top: usize,
    k: &CameraIntrinsics,
    keypoints3d: &[Vec3],
    iterations: usize,
    inlier_px: f64,
    seed: u64,
) -> Result<ScoredProposal> {
    if k_top < 2 {
        return Err(Error::InvalidArgument("ransac_cull needs k >= 2".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("ransac_cull needs at least one iteration".into()));
    }
    let tops = top_k(proposals, k_top)?;
    let n_idx = keypoints3d.len();
    for p in &tops {
        if p.keypoints.len() != n_idx {
            return Err(Error::LengthMismatch { left: p.keypoints.len(), right: n_idx });
        }
    }
    if n_idx < 4 {
        return Err(Error::InvalidArgument("ransac_cull needs >= 4 keypoint indices".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Pose)> = None;

    for _ in 0..iterations {
        // 4 distinct keypoint indices
        let mut indices: Vec<usize> = (0..n_idx).collect();
        for i in 0..4 {
            let j = rng.random_range(i..n_idx);
            indices.swap(i, j);
        }
        let corrs: Vec<Correspondence> = indices[..4]
            .iter()
            .map(|&j| {
                let c = rng.random_range(0..tops.len());
                Correspondence::new(keypoints3d[j], tops[c].keypoints[j])
            })
            .collect();
        let Ok(sol) = epnp_solve(&corrs, k) else { continue };
        let inliers = count_inliers(&tops, keypoints3d, k, &sol.pose, inlier_px);
        if best.as_ref().is_none_or(|(b, _)| inliers > *b) {
            best = Some((inliers, sol.pose));
        }
    }

    let (best_count, best_pose) = best.ok_or(Error::NoConsensus { best: 0 })?;
    if best_count < 4 {
        return Err(Error::NoConsensus { best: best_count });
    }

    // refit on the consensus set of the winning pose
    let mut consensus = Vec::new();
    for (j, x) in keypoints3d.iter().enumerate() {
        if let Ok(reproj) = crate::geometry::project_point(k, &best_pose, x) {
            for p in &tops {
                if (p.keypoints[j] - reproj).norm() < inlier_px {
                    consensus.push(Correspondence::new(*x, p.keypoints[j]));
                }
            }
        }
    }
    let final_pose = if consensus.len() >= 4 {
        epnp_solve(&consensus, k).map(|s| s.pose).unwrap_or(best_pose)
    } else {
        best_pose
    };

    let carrier = tops[0].clone();
    Ok(ScoredProposal {
        proposal: carrier,
        pose: final_pose,
        calibrated_confidence: best_count as f64 / (n_idx * tops.len()) as f64,
        patch: None,
    })
}

fn count_inliers(
    tops: &[KeypointProposal],
    keypoints3d: &[Vec3],
    k: &CameraIntrinsics,
    pose: &Pose,
    inlier_px: f64,
) -> usize {
    let mut count = 0;
    for (j, x) in keypoints3d.iter().enumerate() {
        let Ok(reproj) = crate::geometry::project_point(k, pose, x) else { continue };
        for p in tops {
            if (p.keypoints[j] - reproj).norm() < inlier_px {
                count += 1;
            }
        }
    }
    count
}

/// Overlap measure for [`nms_poses_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmsOverlap {
    /// IoU of tight mask bounding boxes (fast, the default).
    BoundingBox,
    /// IoU of full-resolution rendered masks.
    PixelMask,
}

/// Greedy non-maximum suppression on bounding-box IoU.
///
/// Descending by calibrated confidence; a proposal is suppressed when its
/// box overlaps an already kept one above `iou_threshold` (in (0,1)). Boxes
/// come from each proposal's patch, falling back to the keypoint bounding
/// box when no patch is attached.
pub fn nms_poses(scored: Vec<ScoredProposal>, iou_threshold: f64) -> Vec<ScoredProposal> {
    let boxes: Vec<[f64; 4]> = scored.iter().map(bbox_of).collect();
    greedy_nms(scored, iou_threshold, |i, j| interval_iou(&boxes[i], &boxes[j]))
}

/// NMS with a selectable overlap measure; pixel-mask IoU renders each pose's
/// silhouette with the given mesh and intrinsics.
pub fn nms_poses_with(
    scored: Vec<ScoredProposal>,
    iou_threshold: f64,
    overlap: NmsOverlap,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    mode: MaskMode,
) -> Result<Vec<ScoredProposal>> {
    match overlap {
        NmsOverlap::BoundingBox => Ok(nms_poses(scored, iou_threshold)),
        NmsOverlap::PixelMask => {
            let masks: Vec<crate::silhouette::BinaryMask> = scored
                .iter()
                .map(|s| render_mask(mesh, &s.pose, k, mode))
                .collect::<Result<_>>()?;
            Ok(greedy_nms(scored, iou_threshold, |i, j| mask_iou(&masks[i], &masks[j])))
        }
    }
}

fn greedy_nms(
    scored: Vec<ScoredProposal>,
    iou_threshold: f64,
    overlap: impl Fn(usize, usize) -> f64,
) -> Vec<ScoredProposal> {
    debug_assert!(iou_threshold > 0.0 && iou_threshold < 1.0);
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&i, &j| {
        scored[j]
            .calibrated_confidence
            .total_cmp(&scored[i].calibrated_confidence)
            .then_with(|| {
                scored[j]
                    .proposal
                    .raw_confidence
                    .total_cmp(&scored[i].proposal.raw_confidence)
            })
            .then_with(|| scored[i].proposal.grid_origin.cmp(&scored[j].proposal.grid_origin))
    });
    let mut kept_idx: Vec<usize> = Vec::new();
    for &i in &order {
        if kept_idx.iter().all(|&j| overlap(i, j) <= iou_threshold) {
            kept_idx.push(i);
        }
    }
    let mut take: Vec<Option<ScoredProposal>> = scored.into_iter().map(Some).collect();
    kept_idx.iter().map(|&i| take[i].take().unwrap()).collect()
}

/// Half-open interval box [x0, x1) x [y0, y1).
fn bbox_of(s: &ScoredProposal) -> [f64; 4] {
    if let Some(patch) = &s.patch {
        let r = patch.source_bbox;
        return [r.x0 as f64, r.y0 as f64, r.x1 as f64 + 1.0, r.y1 as f64 + 1.0];
    }
    let mut x0 = f64::INFINITY;
    let mut y0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for p in &s.proposal.keypoints {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    [x0, y0, x1, y1]
}

fn interval_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area_a = (a[2] - a[0]).max(0.0) * (a[3] - a[1]).max(0.0);
    let area_b = (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

fn mask_iou(a: &crate::silhouette::BinaryMask, b: &crate::silhouette::BinaryMask) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (pa, pb) in a.bits().iter().zip(b.bits()) {
        if *pa && *pb {
            inter += 1;
        }
        if *pa || *pb {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Scorer that passes the raw backbone confidence through unchanged.
#[derive(Debug, Default, Clone)]
pub struct RawConfidenceScorer;

impl ProposalScorer for RawConfidenceScorer {
    fn name(&self) -> &str {
        "raw"
    }

    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        Ok(ctx.proposal.raw_confidence.clamp(0.0, 1.0))
    }
}

/// Perfect scorer: the ground-truth calibrated confidence of each pose.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    pub gt_pose: Pose,
    pub params: ConfidenceParams,
}

impl ProposalScorer for OracleScorer {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        match oracle_score(ctx.mesh, ctx.pose, &self.gt_pose, ctx.intrinsics, &self.params) {
            Ok(v) => Ok(v),
            // a hypothesis pushing vertices behind the camera is as wrong as
            // a fully displaced one
            Err(Error::VertexBehindCamera { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    }
}

/// Oracle plus clamped Gaussian noise, keyed deterministically by the
/// proposal's grid origin and the scorer seed.
#[derive(Debug, Clone)]
pub struct NoisyOracleScorer {
    pub oracle: OracleScorer,
    pub sigma: f64,
    pub seed: u64,
}

impl ProposalScorer for NoisyOracleScorer {
    fn name(&self) -> &str {
        "noisy-oracle"
    }

    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        let clean = self.oracle.score(ctx)?;
        let g = ctx.proposal.grid_origin;
        let mut h = self.seed ^ 0x9e3779b97f4a7c15;
        for v in [g.scale as u64, g.row as u64, g.col as u64] {
            h ^= v.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let noise: f64 = rand_distr::Normal::new(0.0, self.sigma)
            .map_err(|e| Error::InvalidArgument(format!("noisy oracle sigma: {e}")))?
            .sample(&mut rng);
        Ok((clean + noise).clamp(0.0, 1.0))
    }
}

/// Runs an external command on each patch: the patch is written as an RGBA
/// PNG to a temp path appended as the last argument, and the first
/// whitespace token of the command's first stdout line must parse as a
/// decimal in [0, 1]. Invoked serially.
#[derive(Debug, Clone)]
pub struct ExternalScorer {
    program: String,
    args: Vec<String>,
    label: String,
}

impl ExternalScorer {
    /// Splits a command template on whitespace; the first token is the
    /// program, the rest are leading arguments.
    pub fn from_template(template: &str) -> Result<Self> {
        let mut parts = template.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Error::ScorerProcessFailed("empty scorer command".into()))?;
        Ok(Self {
            args: parts.collect(),
            label: format!("exec:{template}"),
            program,
        })
    }
}

impl ProposalScorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.label
    }

    fn score(&self, ctx: &ScoreContext<'_>) -> Result<f64> {
        let tmp = tempfile::Builder::new()
            .prefix("cullkit-patch-")
            .suffix(".png")
            .tempfile()
            .map_err(|e| Error::ScorerProcessFailed(format!("temp file: {e}")))?;
        ctx.patch.write_png(tmp.path())?;

        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(tmp.path())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::ScorerProcessFailed(format!("spawn {}: {e}", self.program)))?;
        let mut stdout = String::new();
        if let Some(out) = child.stdout.as_mut() {
            out.read_to_string(&mut stdout)
                .map_err(|e| Error::ScorerProcessFailed(format!("read stdout: {e}")))?;
        }
        let status = child
            .wait()
            .map_err(|e| Error::ScorerProcessFailed(format!("wait: {e}")))?;
        if !status.success() {
            return Err(Error::ScorerProcessFailed(format!(
                "{} exited with {status}",
                self.program
            )));
        }
        let token = stdout
            .lines()
            .next()
            .and_then(|line| line.split_whitespace().next())
            .ok_or_else(|| Error::ScorerProcessFailed("empty scorer output".into()))?;
        let value: f64 = token
            .parse()
            .map_err(|_| Error::ScorerProcessFailed(format!("unparseable confidence {token:?}")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::ScorerProcessFailed(format!(
                "confidence {value} outside [0, 1]"
            )));
        }
        Ok(value)
    }
}
