//! Deterministic CSV/JSON persistence for accuracy and experiment reports,
//! plus the plain-text renderings used by the CLI.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::AccuracyReport;
use crate::sim::ExperimentReport;

/// File names inside an experiment output directory.
pub const EXPERIMENT_CSV: &str = "summary.csv";
pub const EXPERIMENT_JSON: &str = "summary.json";
pub const EXPERIMENT_LOG: &str = "trials.log";

/// File names inside an evaluation output directory.
pub const ACCURACY_CSV: &str = "report.csv";
pub const ACCURACY_CURVES_CSV: &str = "curves.csv";
pub const ACCURACY_JSON: &str = "report.json";

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Writes `summary.csv`, `summary.json`, and `trials.log`; output bytes are
/// a pure function of the report.
pub fn write_experiment_report(dir: &Path, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = String::from(
        "strategy,k,trials,failures,reproj_accuracy,addi_accuracy,mean_reproj_px,median_reproj_px\n",
    );
    for row in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            row.strategy,
            row.k,
            row.trials,
            row.failures,
            fmt6(row.reproj_accuracy),
            fmt6(row.addi_accuracy),
            fmt6(row.mean_reproj_px),
            fmt6(row.median_reproj_px)
        );
    }
    fs::write(dir.join(EXPERIMENT_CSV), csv)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("serialize report: {e}")))?;
    fs::write(dir.join(EXPERIMENT_JSON), json + "\n")?;
    fs::write(dir.join(EXPERIMENT_LOG), report.trial_log.join("\n") + "\n")?;
    Ok(())
}

pub fn load_experiment_report(dir: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(dir.join(EXPERIMENT_JSON))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("parse report: {e}")))
}

/// Writes `report.csv`, `curves.csv`, and `report.json`.
pub fn write_accuracy_report(dir: &Path, report: &AccuracyReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = String::from(
        "class_id,name,instances,failures,reproj_accuracy,addi_accuracy,mean_reproj_px\n",
    );
    for c in &report.classes {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            c.class_id,
            c.name,
            c.instances,
            c.failures,
            fmt6(c.reproj_accuracy),
            fmt6(c.addi_accuracy),
            fmt6(c.mean_reproj_px)
        );
    }
    let _ = writeln!(
        csv,
        "avg,,,,{},{},",
        fmt6(report.average.reproj_accuracy),
        fmt6(report.average.addi_accuracy)
    );
    fs::write(dir.join(ACCURACY_CSV), csv)?;

    let mut curves = String::from("threshold_px");
    for c in &report.classes {
        let _ = write!(curves, ",{}", c.name);
    }
    curves.push_str(",avg\n");
    for t in 0..report.average.curve.len() {
        let _ = write!(curves, "{}", t + 1);
        for c in &report.classes {
            let _ = write!(curves, ",{}", fmt6(c.curve[t]));
        }
        let _ = writeln!(curves, ",{}", fmt6(report.average.curve[t]));
    }
    fs::write(dir.join(ACCURACY_CURVES_CSV), curves)?;

    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("serialize report: {e}")))?;
    fs::write(dir.join(ACCURACY_JSON), json + "\n")?;
    Ok(())
}

pub fn load_accuracy_report(dir: &Path) -> Result<AccuracyReport> {
    let text = fs::read_to_string(dir.join(ACCURACY_JSON))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("parse report: {e}")))
}

/// Plain-text table of an experiment report.
pub fn render_experiment_text(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "experiment: scene={:?} trials={} seed={} (reproj threshold {} px)",
        report.scene, report.trials, report.seed, report.reproj_threshold_px
    );
    let _ = writeln!(
        out,
        "{:<20} {:>4} {:>8} {:>9} {:>12} {:>11} {:>14}",
        "strategy", "k", "trials", "failures", "reproj-acc", "addi-acc", "median-px"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{:<20} {:>4} {:>8} {:>9} {:>12.4} {:>11.4} {:>14.4}",
            r.strategy, r.k, r.trials, r.failures, r.reproj_accuracy, r.addi_accuracy,
            r.median_reproj_px
        );
    }
    if let Some(c) = &report.correlation {
        let _ = writeln!(
            out,
            "correlation over {} proposals: spearman(raw, gt)={:.4} spearman(oracle, gt)={:.4}",
            c.samples, c.spearman_raw_vs_gt, c.spearman_oracle_vs_gt
        );
    }
    out
}

/// Plain-text table of an accuracy report.
pub fn render_accuracy_text(report: &AccuracyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>10} {:>9} {:>12} {:>11} {:>14}",
        "class", "instances", "failures", "reproj-acc", "addi-acc", "mean-px"
    );
    for c in &report.classes {
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>9} {:>12.4} {:>11.4} {:>14.4}",
            c.name, c.instances, c.failures, c.reproj_accuracy, c.addi_accuracy, c.mean_reproj_px
        );
    }
    let _ = writeln!(
        out,
        "{:<16} {:>10} {:>9} {:>12.4} {:>11.4}",
        "avg", "", "", report.average.reproj_accuracy, report.average.addi_accuracy
    );
    out
}
