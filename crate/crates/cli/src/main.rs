//! `cullkit`: silhouette rendering, proposal culling, pose evaluation,
//! z-bias calibration, and synthetic culling experiments.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use cullkit_core::silhouette::MaskMode;
use cullkit_core::Error;

#[derive(Parser)]
#[command(name = "cullkit", version, about = "Calibrated pose-proposal culling toolkit")]
struct Cli {
    /// Seed for every randomized component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MaskModeArg {
    Triangle,
    Splat,
}

impl From<MaskModeArg> for MaskMode {
    fn from(m: MaskModeArg) -> Self {
        match m {
            MaskModeArg::Triangle => MaskMode::TriangleFill,
            MaskModeArg::Splat => MaskMode::VertexSplat,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a mesh silhouette under a pose to a PGM file.
    RenderMask {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long, value_enum, default_value_t = MaskModeArg::Triangle)]
        mode: MaskModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select one pose from a proposal file; prints the result as JSON.
    Cull {
        #[arg(long)]
        dataset: PathBuf,
        /// Image reference as <class-name>/<image-id>.
        #[arg(long)]
        image_id: String,
        #[arg(long)]
        proposals: PathBuf,
        /// One of: raw | oracle | noisy-oracle:<sigma> | exec:<command>.
        #[arg(long)]
        scorer: String,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MaskModeArg::Triangle)]
        mask_mode: MaskModeArg,
        /// Drop the centroid keypoint and solve on the 8 cuboid corners.
        #[arg(long)]
        no_centroid: bool,
        /// Zero RGB outside the rendered mask before scoring.
        #[arg(long)]
        masked_rgb: bool,
    },
    /// Evaluate predicted poses against a dataset split.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        bias_table: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-class z-bias offsets from predicted poses.
    CalibrateBias {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = 400)]
        bins: usize,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a synthetic culling experiment from a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a stored report directory as a plain-text table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let result = match cli.command {
        Command::RenderMask { mesh, pose, intrinsics, mode, out } => {
            commands::render_mask(&mesh, &pose, &intrinsics, mode.into(), &out)
        }
        Command::Cull {
            dataset,
            image_id,
            proposals,
            scorer,
            k,
            mask_mode,
            no_centroid,
            masked_rgb,
        } => commands::cull(
            &dataset,
            &image_id,
            &proposals,
            &scorer,
            k,
            mask_mode.into(),
            !no_centroid,
            masked_rgb,
            cli.seed,
        ),
        Command::Evaluate { dataset, predictions, bias_table, split, out } => {
            commands::evaluate(&dataset, &predictions, bias_table.as_deref(), &split, &out)
        }
        Command::CalibrateBias { dataset, predictions, bins, split, out } => {
            commands::calibrate_bias(&dataset, &predictions, bins, &split, &out)
        }
        Command::Simulate { config, out } => commands::simulate(&config, &out),
        Command::Report { input } => commands::report(&input),
    };

    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
