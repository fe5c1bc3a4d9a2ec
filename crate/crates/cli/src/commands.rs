//! Subcommand implementations.

use std::fs;
use std::path::Path;

use serde::Serialize;

use cullkit_core::culling::{
    cull_with_scorer, CullOptions, ExternalScorer, NoisyOracleScorer, OracleScorer,
    ProposalScorer, RawConfidenceScorer,
};
use cullkit_core::io::{self, DatasetIndex};
use cullkit_core::metrics::{accuracy_report, fit_z_bias, BiasTable, PoseInstance};
use cullkit_core::report as report_fmt;
use cullkit_core::silhouette::MaskMode;
use cullkit_core::sim::{run_experiment, with_thread_cap, ExperimentConfig, RunOptions};
use cullkit_core::{ConfidenceParams, Error, Result};

/// Worker-thread cap from `CULLKIT_THREADS` (0 or unset = automatic).
fn run_options() -> RunOptions {
    let threads = std::env::var("CULLKIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    RunOptions { threads }
}

pub fn render_mask(
    mesh: &Path,
    pose: &Path,
    intrinsics: &Path,
    mode: MaskMode,
    out: &Path,
) -> Result<()> {
    let mesh = io::load_ply(mesh)?;
    let pose = io::load_pose_annotation(pose)?;
    let k = io::load_intrinsics(intrinsics)?;
    let mask = cullkit_core::render_mask(&mesh, &pose, &k, mode)?;
    let mut buf = Vec::new();
    mask.write_pgm(&mut buf)?;
    fs::write(out, buf)?;
    Ok(())
}

#[derive(Serialize)]
struct CullOutput {
    image: String,
    scorer: String,
    k: usize,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    calibrated_confidence: f64,
    raw_confidence: f64,
    grid_origin: [usize; 3],
}

#[allow(clippy::too_many_arguments)]
pub fn cull(
    dataset: &Path,
    image_ref: &str,
    proposals: &Path,
    scorer_spec: &str,
    k_top: usize,
    mask_mode: MaskMode,
    use_centroid: bool,
    masked_rgb: bool,
    seed: u64,
) -> Result<()> {
    let index = DatasetIndex::load(dataset)?;
    let camera = index.intrinsics()?;
    let (class, image_entry) = index.find_image(image_ref)?;
    let mesh = io::load_ply(&class.mesh_path)?;
    let gt_pose = io::load_pose_annotation(&image_entry.pose_path)?;
    let rgb = image::open(&image_entry.image_path)?.to_rgb8();
    if rgb.width() != camera.image_width || rgb.height() != camera.image_height {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs intrinsics {}x{}",
            rgb.width(),
            rgb.height(),
            camera.image_width,
            camera.image_height
        )));
    }
    let proposals = io::load_proposals(proposals)?;

    let params = ConfidenceParams::default();
    let scorer: Box<dyn ProposalScorer> = if scorer_spec == "raw" {
        Box::new(RawConfidenceScorer)
    } else if scorer_spec == "oracle" {
        Box::new(OracleScorer { gt_pose, params })
    } else if let Some(sigma) = scorer_spec.strip_prefix("noisy-oracle:") {
        let sigma: f64 = sigma.parse().map_err(|_| {
            Error::InvalidArgument(format!("bad noisy-oracle sigma {sigma:?}"))
        })?;
        Box::new(NoisyOracleScorer { oracle: OracleScorer { gt_pose, params }, sigma, seed })
    } else if let Some(cmd) = scorer_spec.strip_prefix("exec:") {
        Box::new(ExternalScorer::from_template(cmd)?)
    } else {
        return Err(Error::InvalidArgument(format!(
            "unknown scorer {scorer_spec:?}; use raw | oracle | noisy-oracle:<sigma> | exec:<cmd>"
        )));
    };

    let opts = CullOptions {
        mask_mode,
        use_centroid_keypoint: use_centroid,
        zero_rgb_outside_mask: masked_rgb,
    };
    let selected =
        cull_with_scorer(&rgb, &mesh, &camera, &proposals, k_top, scorer.as_ref(), &opts)?;

    let r = selected.pose.rotation();
    let t = selected.pose.translation();
    let json = CullOutput {
        image: image_ref.to_owned(),
        scorer: scorer.name().to_owned(),
        k: k_top,
        rotation: [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ],
        translation: [t.x, t.y, t.z],
        calibrated_confidence: selected.calibrated_confidence,
        raw_confidence: selected.proposal.raw_confidence,
        grid_origin: [
            selected.proposal.grid_origin.scale,
            selected.proposal.grid_origin.row,
            selected.proposal.grid_origin.col,
        ],
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&json).map_err(|e| Error::Config(format!("json: {e}")))?
    );
    Ok(())
}

pub fn evaluate(
    dataset: &Path,
    predictions: &Path,
    bias_table: Option<&Path>,
    split: &str,
    out: &Path,
) -> Result<()> {
    let index = DatasetIndex::load(dataset)?;
    let camera = index.intrinsics()?;
    let registry = index.registry()?;
    let mut instances = index.load_prediction_instances(predictions, split)?;
    if let Some(table_path) = bias_table {
        let table: BiasTable = serde_json::from_str(&fs::read_to_string(table_path)?)
            .map_err(|e| Error::Config(format!("bias table: {e}")))?;
        for inst in &mut instances {
            if let Some(correction) = table.correction(inst.class_id) {
                inst.predicted = cullkit_core::apply_z_bias(&inst.predicted, correction);
            }
        }
    }
    let report = with_thread_cap(run_options().threads, || {
        accuracy_report(
            &instances,
            &registry,
            &camera,
            cullkit_core::metrics::DEFAULT_REPROJ_THRESHOLD_PX,
        )
    })??;
    report_fmt::write_accuracy_report(out, &report)?;
    print!("{}", report_fmt::render_accuracy_text(&report));
    Ok(())
}

pub fn calibrate_bias(
    dataset: &Path,
    predictions: &Path,
    bins: usize,
    split: &str,
    out: &Path,
) -> Result<()> {
    let index = DatasetIndex::load(dataset)?;
    let registry = index.registry()?;
    let instances: Vec<PoseInstance> = index.load_prediction_instances(predictions, split)?;
    let table = fit_z_bias(&instances, &registry, bins)?;
    for entry in &table.entries {
        if entry.low_confidence {
            eprintln!(
                "warning: class {} fitted from only {} instances",
                entry.class_id, entry.samples
            );
        }
    }
    let json = serde_json::to_string_pretty(&table)
        .map_err(|e| Error::Config(format!("bias table: {e}")))?;
    fs::write(out, json + "\n")?;
    Ok(())
}

pub fn simulate(config: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let report = run_experiment(&cfg, &run_options())?;
    report_fmt::write_experiment_report(out, &report)?;
    print!("{}", report_fmt::render_experiment_text(&report));
    Ok(())
}

pub fn report(input: &Path) -> Result<()> {
    if input.join(report_fmt::EXPERIMENT_JSON).exists() {
        let report = report_fmt::load_experiment_report(input)?;
        print!("{}", report_fmt::render_experiment_text(&report));
        return Ok(());
    }
    if input.join(report_fmt::ACCURACY_JSON).exists() {
        let report = report_fmt::load_accuracy_report(input)?;
        print!("{}", report_fmt::render_accuracy_text(&report));
        return Ok(());
    }
    Err(Error::Dataset(format!(
        "no {} or {} under {}",
        report_fmt::EXPERIMENT_JSON,
        report_fmt::ACCURACY_JSON,
        input.display()
    )))
}
