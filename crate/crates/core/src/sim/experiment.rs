//! Configurable culling experiments: sample poses, synthesize proposal
//! scenes, run culling strategies, and aggregate accuracy tables and
//! accuracy-vs-k curves. Fully reproducible from (config, seed).

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    mix_seed, sample_gt_pose, synthesize_scene, synthesize_scene_object_local, GridSpec,
    Miscalibration, NoiseModel, PoseSampler, Scene, SceneConfig,
};
use crate::confidence::{calibrated_confidence, proposal_confidence, ConfidenceParams};
use crate::culling::{
    cull_argmax, cull_with_scorer, ransac_cull, top_k, CullOptions, NoisyOracleScorer,
    OracleScorer, RawConfidenceScorer, ScoredProposal,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, MeshModel, Pose};
use crate::metrics::{
    addi_correct, reprojection_metric, spearman_rank_correlation, PoseInstance,
};
use crate::pnp::{epnp_solve, Correspondence};
use crate::silhouette::MaskMode;

/// Scene synthesis flavor; see the module docs for what each stresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Dense,
    ObjectLocal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshConfig {
    pub path: String,
    #[serde(default)]
    pub class_id: usize,
    #[serde(default = "default_class_name")]
    pub class_name: String,
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default = "default_class_count")]
    pub class_count: usize,
}

fn default_class_name() -> String {
    "object".into()
}

fn default_class_count() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntrinsicsConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl IntrinsicsConfig {
    pub fn to_camera(self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CullingConfig {
    #[serde(default = "default_true")]
    pub use_centroid_keypoint: bool,
    #[serde(default = "default_mask_mode")]
    pub mask_mode: MaskMode,
}

fn default_true() -> bool {
    true
}

fn default_mask_mode() -> MaskMode {
    MaskMode::TriangleFill
}

impl Default for CullingConfig {
    fn default() -> Self {
        Self { use_centroid_keypoint: true, mask_mode: MaskMode::TriangleFill }
    }
}

impl CullingConfig {
    fn to_options(&self) -> CullOptions {
        CullOptions {
            mask_mode: self.mask_mode,
            use_centroid_keypoint: self.use_centroid_keypoint,
            zero_rgb_outside_mask: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectLocalConfig {
    pub decoy_confidence_ceiling: f64,
}

impl Default for ObjectLocalConfig {
    fn default() -> Self {
        Self { decoy_confidence_ceiling: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub reproj_threshold_px: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { reproj_threshold_px: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelationConfig {
    #[serde(default = "default_corr_samples")]
    pub samples: usize,
    #[serde(default = "default_corr_pool")]
    pub pool_k: usize,
}

fn default_corr_samples() -> usize {
    3000
}

fn default_corr_pool() -> usize {
    6
}

/// One strategy block from the config; `k` lists expand into separate rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StrategyConfig {
    Argmax,
    OracleCull { k: Vec<usize> },
    RawCull { k: Vec<usize> },
    NoisyOracleCull { k: Vec<usize>, sigma: f64 },
    Ransac { k: Vec<usize>, iterations: usize, inlier_px: f64 },
}

/// Noise block of the config; the per-trial stream seed is derived from the
/// experiment seed, so `seed` here may be omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub keypoint_sigma_px: f64,
    pub outlier_fraction: f64,
    pub confidence_noise_sigma: f64,
    pub miscalibration: Miscalibration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    #[serde(default = "default_scene")]
    pub scene: SceneKind,
    pub mesh: MeshConfig,
    pub intrinsics: IntrinsicsConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub confidence: ConfidenceParams,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub poses: PoseSampler,
    #[serde(default)]
    pub culling: CullingConfig,
    #[serde(default)]
    pub object_local: ObjectLocalConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub strategies: Vec<StrategyConfig>,
    #[serde(default)]
    pub correlation: Option<CorrelationConfig>,
    /// Directory mesh paths resolve against; set by [`ExperimentConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_scene() -> SceneKind {
    SceneKind::Dense
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        if self.grid.scales.is_empty() {
            return Err(Error::Config("grid needs at least one scale".into()));
        }
        self.intrinsics.to_camera()?;
        Ok(())
    }

    pub fn mesh_path(&self) -> PathBuf {
        self.base_dir.join(&self.mesh.path)
    }
}

/// Execution knobs independent of the experiment definition.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` or `Some(0)` means automatic.
    pub threads: Option<usize>,
}

/// Runs `f` inside a thread pool capped at `threads` workers (`None`/0 =
/// automatic); used by callers that parallelize batch evaluation.
pub fn with_thread_cap<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// One aggregated line of the experiment table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    /// Top-k depth; 0 for strategies that do not pool (argmax).
    pub k: usize,
    pub trials: usize,
    pub failures: usize,
    pub reproj_accuracy: f64,
    pub addi_accuracy: f64,
    pub mean_reproj_px: f64,
    pub median_reproj_px: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub samples: usize,
    pub spearman_raw_vs_gt: f64,
    pub spearman_oracle_vs_gt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub trials: usize,
    pub scene: SceneKind,
    pub reproj_threshold_px: f64,
    pub rows: Vec<StrategyRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub correlation: Option<CorrelationReport>,
    /// Per-trial log lines, persisted separately from the JSON summary.
    #[serde(skip)]
    pub trial_log: Vec<String>,
}

#[derive(Debug, Clone)]
struct StrategyInstance {
    label: String,
    k: usize,
    kind: StrategyKind,
}

#[derive(Debug, Clone)]
enum StrategyKind {
    Argmax,
    OracleCull,
    RawCull,
    NoisyOracleCull { sigma: f64 },
    Ransac { iterations: usize, inlier_px: f64 },
}

fn expand_strategies(configs: &[StrategyConfig]) -> Vec<StrategyInstance> {
    let mut out = Vec::new();
    for cfg in configs {
        match cfg {
            StrategyConfig::Argmax => out.push(StrategyInstance {
                label: "argmax".into(),
                k: 0,
                kind: StrategyKind::Argmax,
            }),
            StrategyConfig::OracleCull { k } => {
                for &k in k {
                    out.push(StrategyInstance {
                        label: "oracle-cull".into(),
                        k,
                        kind: StrategyKind::OracleCull,
                    });
                }
            }
            StrategyConfig::RawCull { k } => {
                for &k in k {
                    out.push(StrategyInstance {
                        label: "raw-cull".into(),
                        k,
                        kind: StrategyKind::RawCull,
                    });
                }
            }
            StrategyConfig::NoisyOracleCull { k, sigma } => {
                for &k in k {
                    out.push(StrategyInstance {
                        label: "noisy-oracle-cull".into(),
                        k,
                        kind: StrategyKind::NoisyOracleCull { sigma: *sigma },
                    });
                }
            }
            StrategyConfig::Ransac { k, iterations, inlier_px } => {
                for &k in k {
                    out.push(StrategyInstance {
                        label: "ransac".into(),
                        k,
                        kind: StrategyKind::Ransac {
                            iterations: *iterations,
                            inlier_px: *inlier_px,
                        },
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Outcome {
    reproj_px: f64,
    reproj_ok: bool,
    addi_ok: bool,
    confidence: f64,
    failure: Option<String>,
}

impl Outcome {
    fn failed(reason: String) -> Self {
        Self {
            reproj_px: f64::INFINITY,
            reproj_ok: false,
            addi_ok: false,
            confidence: 0.0,
            failure: Some(reason),
        }
    }
}

#[derive(Debug)]
struct TrialResult {
    outcomes: Vec<Outcome>,
    correlation_triples: Vec<(f64, f64, f64)>,
}

/// Runs the configured experiment; reports aggregate per (strategy, k), and
/// repeated runs with the same config and seed are bit-identical regardless
/// of thread count.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mesh = crate::io::load_ply(&cfg.mesh_path())?;
    let camera = cfg.intrinsics.to_camera()?;
    let strategies = expand_strategies(&cfg.strategies);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let trial_results: Vec<TrialResult> = pool.install(|| {
        use rayon::prelude::*;
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &mesh, &camera, &strategies, t as u64))
            .collect()
    });

    let mut rows = Vec::with_capacity(strategies.len());
    for (si, strat) in strategies.iter().enumerate() {
        let outcomes: Vec<&Outcome> = trial_results.iter().map(|t| &t.outcomes[si]).collect();
        let failures = outcomes.iter().filter(|o| o.failure.is_some()).count();
        let n = outcomes.len() as f64;
        let finite: Vec<f64> = outcomes
            .iter()
            .map(|o| o.reproj_px)
            .filter(|v| v.is_finite())
            .collect();
        let mut all: Vec<f64> = outcomes.iter().map(|o| o.reproj_px).collect();
        all.sort_by(f64::total_cmp);
        let median = if all.is_empty() {
            f64::INFINITY
        } else if all.len() % 2 == 1 {
            all[all.len() / 2]
        } else {
            (all[all.len() / 2 - 1] + all[all.len() / 2]) / 2.0
        };
        rows.push(StrategyRow {
            strategy: strat.label.clone(),
            k: strat.k,
            trials: outcomes.len(),
            failures,
            reproj_accuracy: outcomes.iter().filter(|o| o.reproj_ok).count() as f64 / n,
            addi_accuracy: outcomes.iter().filter(|o| o.addi_ok).count() as f64 / n,
            mean_reproj_px: if finite.is_empty() {
                f64::INFINITY
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
            median_reproj_px: median,
        });
    }

    let correlation = cfg.correlation.map(|cc| {
        let mut raw = Vec::new();
        let mut oracle = Vec::new();
        let mut gtc = Vec::new();
        'outer: for t in &trial_results {
            for &(r, o, g) in &t.correlation_triples {
                raw.push(r);
                oracle.push(o);
                gtc.push(g);
                if raw.len() >= cc.samples {
                    break 'outer;
                }
            }
        }
        CorrelationReport {
            samples: raw.len(),
            spearman_raw_vs_gt: spearman_rank_correlation(&raw, &gtc),
            spearman_oracle_vs_gt: spearman_rank_correlation(&oracle, &gtc),
        }
    });

    let mut trial_log = Vec::new();
    for (t, tr) in trial_results.iter().enumerate() {
        for (si, o) in tr.outcomes.iter().enumerate() {
            let s = &strategies[si];
            match &o.failure {
                Some(reason) => trial_log.push(format!(
                    "trial={t} strategy={} k={} failed={reason}",
                    s.label, s.k
                )),
                None => trial_log.push(format!(
                    "trial={t} strategy={} k={} reproj_px={:.6} reproj_ok={} addi_ok={} conf={:.6}",
                    s.label,
                    s.k,
                    o.reproj_px,
                    u8::from(o.reproj_ok),
                    u8::from(o.addi_ok),
                    o.confidence
                )),
            }
        }
    }

    Ok(ExperimentReport {
        seed: cfg.seed,
        trials: cfg.trials,
        scene: cfg.scene,
        reproj_threshold_px: cfg.evaluation.reproj_threshold_px,
        rows,
        correlation,
        trial_log,
    })
}

fn run_trial(
    cfg: &ExperimentConfig,
    mesh: &MeshModel,
    camera: &CameraIntrinsics,
    strategies: &[StrategyInstance],
    trial: u64,
) -> TrialResult {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2 * trial));
    let gt_pose = match sample_gt_pose(mesh, camera, &cfg.poses, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            return TrialResult {
                outcomes: vec![Outcome::failed(format!("pose sampling: {e}")); strategies.len()],
                correlation_triples: Vec::new(),
            }
        }
    };
    let scene_cfg = SceneConfig {
        grid: cfg.grid.clone(),
        noise: NoiseModel {
            keypoint_sigma_px: cfg.noise.keypoint_sigma_px,
            outlier_fraction: cfg.noise.outlier_fraction,
            confidence_noise_sigma: cfg.noise.confidence_noise_sigma,
            miscalibration: cfg.noise.miscalibration,
            seed: mix_seed(cfg.seed, 2 * trial + 1),
        },
        confidence: cfg.confidence,
        class_id: cfg.mesh.class_id,
        class_count: cfg.mesh.class_count,
    };
    let scene = match cfg.scene {
        SceneKind::Dense => synthesize_scene(mesh, &gt_pose, camera, &scene_cfg),
        SceneKind::ObjectLocal => synthesize_scene_object_local(
            mesh,
            &gt_pose,
            camera,
            &scene_cfg,
            cfg.object_local.decoy_confidence_ceiling,
        ),
    };
    let scene = match scene {
        Ok(s) => s,
        Err(e) => {
            return TrialResult {
                outcomes: vec![Outcome::failed(format!("scene synthesis: {e}")); strategies.len()],
                correlation_triples: Vec::new(),
            }
        }
    };

    let image = image::RgbImage::from_pixel(
        camera.image_width,
        camera.image_height,
        image::Rgb([128, 128, 128]),
    );
    let opts = cfg.culling.to_options();
    let kp3d = opts.keypoints3d(mesh);

    let outcomes = strategies
        .iter()
        .map(|strat| {
            let selected: Result<ScoredProposal> = match &strat.kind {
                StrategyKind::Argmax => cull_argmax(&scene.proposals, mesh, camera, &opts),
                StrategyKind::OracleCull => {
                    let scorer = OracleScorer { gt_pose, params: cfg.confidence };
                    cull_with_scorer(&image, mesh, camera, &scene.proposals, strat.k, &scorer, &opts)
                }
                StrategyKind::RawCull => cull_with_scorer(
                    &image,
                    mesh,
                    camera,
                    &scene.proposals,
                    strat.k,
                    &RawConfidenceScorer,
                    &opts,
                ),
                StrategyKind::NoisyOracleCull { sigma } => {
                    let scorer = NoisyOracleScorer {
                        oracle: OracleScorer { gt_pose, params: cfg.confidence },
                        sigma: *sigma,
                        seed: mix_seed(cfg.seed, 0x6e6f_6973 ^ trial),
                    };
                    cull_with_scorer(&image, mesh, camera, &scene.proposals, strat.k, &scorer, &opts)
                }
                StrategyKind::Ransac { iterations, inlier_px } => ransac_cull(
                    &scene.proposals,
                    strat.k,
                    camera,
                    &kp3d,
                    *iterations,
                    *inlier_px,
                    mix_seed(cfg.seed, 0x7261_6e73 ^ (trial * 131 + strat.k as u64)),
                ),
            };
            match selected {
                Ok(s) => evaluate_outcome(cfg, mesh, camera, &gt_pose, &s),
                Err(e) => Outcome::failed(e.to_string()),
            }
        })
        .collect();

    let correlation_triples = match cfg.correlation {
        Some(cc) => collect_correlation(cfg, mesh, camera, &gt_pose, &scene, cc.pool_k),
        None => Vec::new(),
    };

    TrialResult { outcomes, correlation_triples }
}

fn evaluate_outcome(
    cfg: &ExperimentConfig,
    mesh: &MeshModel,
    camera: &CameraIntrinsics,
    gt_pose: &Pose,
    selected: &ScoredProposal,
) -> Outcome {
    let instance = PoseInstance {
        predicted: selected.pose,
        ground_truth: *gt_pose,
        class_id: cfg.mesh.class_id as u32,
    };
    let (reproj_px, reproj_ok) =
        reprojection_metric(&instance, mesh, camera, cfg.evaluation.reproj_threshold_px)
            .unwrap_or((f64::INFINITY, false));
    Outcome {
        reproj_px,
        reproj_ok,
        addi_ok: addi_correct(&instance, mesh, cfg.mesh.symmetric),
        confidence: selected.calibrated_confidence,
        failure: None,
    }
}

/// (raw, oracle, ground-truth) confidence triples for the top pool of one
/// scene; proposals whose pose cannot be recovered are skipped.
fn collect_correlation(
    cfg: &ExperimentConfig,
    mesh: &MeshModel,
    camera: &CameraIntrinsics,
    gt_pose: &Pose,
    scene: &Scene,
    pool_k: usize,
) -> Vec<(f64, f64, f64)> {
    let opts = cfg.culling.to_options();
    let kp3d = opts.keypoints3d(mesh);
    let Ok(tops) = top_k(&scene.proposals, pool_k) else { return Vec::new() };
    let mut out = Vec::new();
    for p in tops {
        if p.keypoints.len() != kp3d.len() {
            continue;
        }
        let corrs: Vec<Correspondence> = kp3d
            .iter()
            .zip(&p.keypoints)
            .map(|(x, px)| Correspondence::new(*x, *px))
            .collect();
        let Ok(sol) = epnp_solve(&corrs, camera) else { continue };
        let oracle = match calibrated_confidence(mesh, &sol.pose, gt_pose, camera, &cfg.confidence)
        {
            Ok(v) => v,
            Err(Error::VertexBehindCamera { .. }) => 0.0,
            Err(_) => continue,
        };
        let Ok(gtc) = proposal_confidence(&p.keypoints, &scene.gt_keypoints, &cfg.confidence)
        else {
            continue;
        };
        out.push((p.raw_confidence, oracle, gtc));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_box_mesh, Vec3};

    fn write_fixture(dir: &Path) -> PathBuf {
        let mesh = make_box_mesh(Vec3::zeros(), Vec3::new(0.2, 0.18, 0.15), 1);
        crate::io::save_ply_ascii(&mesh, &dir.join("box.ply")).unwrap();
        let config = r#"
seed = 7
trials = 4
scene = "dense"

[mesh]
path = "box.ply"

[intrinsics]
fx = 420.0
fy = 420.0
cx = 208.0
cy = 208.0
width = 416
height = 416

[grid]
scales = [13]
image_size = 416

[noise]
keypoint_sigma_px = 2.0
outlier_fraction = 0.1
confidence_noise_sigma = 0.1
miscalibration = { kind = "power", gamma = 0.5 }

[[strategies]]
kind = "argmax"

[[strategies]]
kind = "oracle-cull"
k = [3]

[correlation]
samples = 30
pool_k = 4
"#;
        let path = dir.join("experiment.toml");
        std::fs::write(&path, config).unwrap();
        path
    }

    #[test]
    fn small_experiment_runs_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path());
        let cfg = ExperimentConfig::load(&path).unwrap();
        let a = run_experiment(&cfg, &RunOptions { threads: Some(1) }).unwrap();
        let b = run_experiment(&cfg, &RunOptions { threads: Some(3) }).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.trials, 4);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.strategy, rb.strategy);
            assert_eq!(ra.reproj_accuracy.to_bits(), rb.reproj_accuracy.to_bits());
            assert_eq!(ra.mean_reproj_px.to_bits(), rb.mean_reproj_px.to_bits());
        }
        assert_eq!(a.trial_log, b.trial_log);
        let ca = a.correlation.unwrap();
        let cb = b.correlation.unwrap();
        assert_eq!(ca.spearman_raw_vs_gt.to_bits(), cb.spearman_raw_vs_gt.to_bits());
        assert!(ca.samples > 0);
    }

    #[test]
    fn zero_noise_means_every_strategy_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path());
        let mut cfg = ExperimentConfig::load(&path).unwrap();
        cfg.noise = NoiseConfig {
            keypoint_sigma_px: 0.0,
            outlier_fraction: 0.0,
            confidence_noise_sigma: 0.0,
            miscalibration: Miscalibration::None,
        };
        let report = run_experiment(&cfg, &RunOptions { threads: Some(1) }).unwrap();
        for row in &report.rows {
            assert_eq!(row.reproj_accuracy, 1.0, "{row:?}");
            assert_eq!(row.addi_accuracy, 1.0, "{row:?}");
            assert_eq!(row.failures, 0);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_fixture(dir.path());
        let mut cfg = ExperimentConfig::load(&path).unwrap();
        cfg.trials = 0;
        assert!(matches!(
            run_experiment(&cfg, &RunOptions::default()),
            Err(Error::Config(_))
        ));
    }
}
