//! Pose-accuracy metrics, accuracy reports, and z-axis bias correction.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::confidence::vertex_distance;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, MeshModel, Pose, Vec3};

/// Pixel threshold of the reprojection correctness test.
pub const DEFAULT_REPROJ_THRESHOLD_PX: f64 = 5.0;
/// Fraction of the mesh diameter under which a vertex-distance pose counts
/// as correct.
pub const ADDI_DIAMETER_FRACTION: f64 = 0.1;
/// Largest threshold (px) sampled in accuracy curves.
pub const CURVE_MAX_THRESHOLD_PX: usize = 50;
/// Vertex count above which the closest-point metric switches to the
/// spatial-grid search.
const ADI_BRUTE_FORCE_LIMIT: usize = 5000;

/// One evaluated pose: prediction, ground truth, and the object class.
#[derive(Debug, Clone)]
pub struct PoseInstance {
    pub predicted: Pose,
    pub ground_truth: Pose,
    pub class_id: u32,
}

/// Per-class evaluation assets.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub name: String,
    pub mesh: MeshModel,
    pub symmetric: bool,
}

/// Class id to evaluation assets, ordered for deterministic reports.
pub type MeshRegistry = BTreeMap<u32, ClassSpec>;

/// Mean pixel distance between projections under both poses, and whether it
/// stays below `threshold_px`.
pub fn reprojection_metric(
    instance: &PoseInstance,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    threshold_px: f64,
) -> Result<(f64, bool)> {
    let mut sum = 0.0;
    for x in mesh.vertices() {
        sum += vertex_distance(x, &instance.predicted, &instance.ground_truth, k)?;
    }
    let mean = sum / mesh.vertices().len() as f64;
    Ok((mean, mean < threshold_px))
}

/// Mean 3D distance between paired transformed vertices (mesh units).
pub fn add_error(instance: &PoseInstance, mesh: &MeshModel) -> f64 {
    let mut sum = 0.0;
    for x in mesh.vertices() {
        let p = instance.predicted.transform_point(x);
        let g = instance.ground_truth.transform_point(x);
        sum += (p - g).norm();
    }
    sum / mesh.vertices().len() as f64
}

/// Mean closest-point distance between the transformed vertex sets, for
/// rotationally symmetric objects.
///
/// Brute force up to 5000 vertices, spatial-grid accelerated above; both
/// paths return the exact minimum.
pub fn adi_error(instance: &PoseInstance, mesh: &MeshModel) -> f64 {
    let pred: Vec<Vec3> = mesh.vertices().iter().map(|x| instance.predicted.transform_point(x)).collect();
    let gt: Vec<Vec3> = mesh.vertices().iter().map(|x| instance.ground_truth.transform_point(x)).collect();
    if mesh.vertices().len() <= ADI_BRUTE_FORCE_LIMIT {
        adi_brute(&pred, &gt)
    } else {
        adi_grid(&pred, &gt)
    }
}

fn adi_brute(pred: &[Vec3], gt: &[Vec3]) -> f64 {
    let mut sum = 0.0;
    for p in pred {
        let best = gt
            .iter()
            .map(|q| (p - q).norm_squared())
            .fold(f64::INFINITY, f64::min);
        sum += best.sqrt();
    }
    sum / pred.len() as f64
}

/// Exact nearest-neighbor search over a uniform grid with expanding
/// Chebyshev rings; a ring can be skipped only once the best distance is at
/// most `(ring - 1) * cell`, which lower-bounds everything beyond it.
fn adi_grid(pred: &[Vec3], gt: &[Vec3]) -> f64 {
    let mut lo = gt[0];
    let mut hi = gt[0];
    for q in gt {
        lo = lo.inf(q);
        hi = hi.sup(q);
    }
    let extent = (hi - lo).amax().max(f64::MIN_POSITIVE);
    let side = (gt.len() as f64).cbrt().ceil().max(1.0);
    let cell = extent / side;

    let key = |p: &Vec3| -> (i64, i64, i64) {
        (
            ((p.x - lo.x) / cell).floor() as i64,
            ((p.y - lo.y) / cell).floor() as i64,
            ((p.z - lo.z) / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, q) in gt.iter().enumerate() {
        grid.entry(key(q)).or_default().push(i);
    }

    let mut sum = 0.0;
    for p in pred {
        let (cx, cy, cz) = key(p);
        let mut best = f64::INFINITY;
        let mut ring = 0i64;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(items) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &i in items {
                                best = best.min((p - gt[i]).norm_squared());
                            }
                        }
                    }
                }
            }
            // from anywhere inside the query cell, every point beyond ring r
            // is at least r * cell away, so the current best is final once it
            // undercuts that bound
            if best.is_finite() && best.sqrt() <= ring as f64 * cell {
                break;
            }
            ring += 1;
            // ring swept past the occupied bounding box on every axis
            if ring as f64 > side + 2.0 && best.is_finite() {
                break;
            }
        }
        sum += best.sqrt();
    }
    sum / pred.len() as f64
}

/// ADD (paired) or ADI (closest point) correctness at 10% of the diameter.
pub fn addi_correct(instance: &PoseInstance, mesh: &MeshModel, symmetric: bool) -> bool {
    let err = if symmetric { adi_error(instance, mesh) } else { add_error(instance, mesh) };
    err < ADDI_DIAMETER_FRACTION * mesh.diameter()
}

/// Per-class accuracy figures plus the reprojection threshold curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: u32,
    pub name: String,
    pub instances: usize,
    /// Instances whose projections were unavailable (behind camera); they
    /// count as incorrect everywhere.
    pub failures: usize,
    pub reproj_accuracy: f64,
    pub addi_accuracy: f64,
    pub mean_reproj_px: f64,
    /// Accuracy at integer pixel thresholds 1..=50.
    pub curve: Vec<f64>,
}

/// Unweighted averages across classes (the per-class mean convention).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AverageAccuracy {
    pub reproj_accuracy: f64,
    pub addi_accuracy: f64,
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub reproj_threshold_px: f64,
    pub classes: Vec<ClassAccuracy>,
    pub average: AverageAccuracy,
}

/// Evaluates all instances against the registry meshes.
///
/// Accuracy per class is the fraction of correct instances; the report also
/// samples the reprojection curve at integer thresholds. Instances with
/// behind-camera projections are tallied as failures and count as incorrect.
pub fn accuracy_report(
    instances: &[PoseInstance],
    registry: &MeshRegistry,
    k: &CameraIntrinsics,
    reproj_threshold_px: f64,
) -> Result<AccuracyReport> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("accuracy report needs at least one instance".into()));
    }
    let mut grouped: BTreeMap<u32, Vec<&PoseInstance>> = BTreeMap::new();
    for inst in instances {
        if !registry.contains_key(&inst.class_id) {
            return Err(Error::Dataset(format!("class {} missing from registry", inst.class_id)));
        }
        grouped.entry(inst.class_id).or_default().push(inst);
    }

    let mut classes = Vec::new();
    for (class_id, members) in &grouped {
        let spec = &registry[class_id];
        // per-instance metrics are pure; fan out and reduce in input order
        let per_instance: Vec<Result<(f64, bool)>> = {
            use rayon::prelude::*;
            members
                .par_iter()
                .map(|inst| {
                    let mean = match reprojection_metric(inst, &spec.mesh, k, reproj_threshold_px)
                    {
                        Ok((mean, _)) => mean,
                        Err(Error::NonPositiveDepth { .. })
                        | Err(Error::VertexBehindCamera { .. }) => f64::INFINITY,
                        Err(e) => return Err(e),
                    };
                    Ok((mean, addi_correct(inst, &spec.mesh, spec.symmetric)))
                })
                .collect()
        };
        let mut reproj_means = Vec::with_capacity(members.len());
        let mut addi_hits = 0usize;
        let mut failures = 0usize;
        for item in per_instance {
            let (mean, addi_ok) = item?;
            if !mean.is_finite() {
                failures += 1;
            }
            reproj_means.push(mean);
            if addi_ok {
                addi_hits += 1;
            }
        }
        let n = members.len() as f64;
        let frac_below = |thr: f64| reproj_means.iter().filter(|&&m| m < thr).count() as f64 / n;
        let finite_sum: f64 = reproj_means.iter().filter(|m| m.is_finite()).sum();
        let finite_n = reproj_means.iter().filter(|m| m.is_finite()).count();
        classes.push(ClassAccuracy {
            class_id: *class_id,
            name: spec.name.clone(),
            instances: members.len(),
            failures,
            reproj_accuracy: frac_below(reproj_threshold_px),
            addi_accuracy: addi_hits as f64 / n,
            mean_reproj_px: if finite_n > 0 { finite_sum / finite_n as f64 } else { f64::INFINITY },
            curve: (1..=CURVE_MAX_THRESHOLD_PX).map(|t| frac_below(t as f64)).collect(),
        });
    }

    let nc = classes.len() as f64;
    let average = AverageAccuracy {
        reproj_accuracy: classes.iter().map(|c| c.reproj_accuracy).sum::<f64>() / nc,
        addi_accuracy: classes.iter().map(|c| c.addi_accuracy).sum::<f64>() / nc,
        curve: (0..CURVE_MAX_THRESHOLD_PX)
            .map(|i| classes.iter().map(|c| c.curve[i]).sum::<f64>() / nc)
            .collect(),
    };
    Ok(AccuracyReport { reproj_threshold_px, classes, average })
}

/// Per-class z-bias fit: histogram mode of the signed z errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasEntry {
    pub class_id: u32,
    /// Mode of the per-instance mean z error (predicted minus ground truth).
    pub z_error_mode: f64,
    pub bin_width: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub samples: usize,
    /// Set when fewer than `bins / 10` instances backed the fit.
    pub low_confidence: bool,
}

/// Fitted per-class z offsets plus the histogram metadata behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasTable {
    pub bins: usize,
    pub entries: Vec<BiasEntry>,
}

impl BiasTable {
    pub fn entry(&self, class_id: u32) -> Option<&BiasEntry> {
        self.entries.iter().find(|e| e.class_id == class_id)
    }

    /// The z-translation correction that cancels the fitted error mode.
    pub fn correction(&self, class_id: u32) -> Option<f64> {
        self.entry(class_id).map(|e| -e.z_error_mode)
    }
}

/// Per-instance mean camera-frame z error (predicted minus ground truth).
pub fn mean_z_error(instance: &PoseInstance, mesh: &MeshModel) -> f64 {
    let mut sum = 0.0;
    for x in mesh.vertices() {
        let p = instance.predicted.transform_point(x);
        let g = instance.ground_truth.transform_point(x);
        sum += p.z - g.z;
    }
    sum / mesh.vertices().len() as f64
}

/// Fits per-class z-error modes with an equal-width histogram over the data
/// range. Ties pick the bin whose center is nearer zero (lower index on an
/// exact tie); a zero-width range degenerates to that single value. Classes
/// with fewer than `bins / 10` samples are flagged, not dropped.
pub fn fit_z_bias(
    instances: &[PoseInstance],
    registry: &MeshRegistry,
    bins: usize,
) -> Result<BiasTable> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let mut grouped: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for inst in instances {
        let spec = registry
            .get(&inst.class_id)
            .ok_or_else(|| Error::Dataset(format!("class {} missing from registry", inst.class_id)))?;
        grouped.entry(inst.class_id).or_default().push(mean_z_error(inst, &spec.mesh));
    }

    let mut entries = Vec::new();
    for (class_id, errors) in grouped {
        let min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (max - min) / bins as f64;
        let mode = if width <= 0.0 {
            min
        } else {
            let mut counts = vec![0usize; bins];
            for &e in &errors {
                let idx = (((e - min) / width).floor() as usize).min(bins - 1);
                counts[idx] += 1;
            }
            let center = |i: usize| min + (i as f64 + 0.5) * width;
            let mut best = 0usize;
            for i in 1..bins {
                if counts[i] > counts[best]
                    || (counts[i] == counts[best] && center(i).abs() < center(best).abs())
                {
                    best = i;
                }
            }
            center(best)
        };
        entries.push(BiasEntry {
            class_id,
            z_error_mode: mode,
            bin_width: width.max(0.0),
            range_min: min,
            range_max: max,
            samples: errors.len(),
            low_confidence: errors.len() < bins / 10,
        });
    }
    Ok(BiasTable { bins, entries })
}

/// Adds `offset` to the camera-frame z translation; the rotation is kept.
pub fn apply_z_bias(pose: &Pose, offset: f64) -> Pose {
    pose.with_z_offset(offset)
}

/// Spearman rank correlation with average ranks for ties.
///
/// Returns 0 when either input has zero rank variance.
pub fn spearman_rank_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs paired samples");
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        va += (x - mean) * (x - mean);
        vb += (y - mean) * (y - mean);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}
