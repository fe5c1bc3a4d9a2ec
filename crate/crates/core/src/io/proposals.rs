//! Versioned proposal JSON: lets an external keypoint backbone feed the
//! culling pipeline.
//!
//! ```json
//! {
//!   "version": 1,
//!   "proposals": [
//!     {
//!       "keypoints": [[x, y], ...],
//!       "confidence": 0.9,
//!       "class_scores": [1.0],
//!       "grid_origin": [0, 3, 7]
//!     }
//!   ]
//! }
//! ```
//!
//! `grid_origin` is optional; absent, proposals get `(0, index, 0)` so that
//! tie-breaking stays deterministic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::culling::{GridOrigin, KeypointProposal};
use crate::error::{Error, Result};
use crate::geometry::Pixel2;

pub const PROPOSAL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ProposalsFile {
    version: u32,
    proposals: Vec<ProposalEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProposalEntry {
    keypoints: Vec<[f64; 2]>,
    confidence: f64,
    #[serde(default)]
    class_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid_origin: Option<[usize; 3]>,
}

pub fn load_proposals(path: &Path) -> Result<Vec<KeypointProposal>> {
    let text = std::fs::read_to_string(path)?;
    let parsed: ProposalsFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    if parsed.version != PROPOSAL_SCHEMA_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "proposal schema version {} (expected {PROPOSAL_SCHEMA_VERSION})",
            parsed.version
        )));
    }
    Ok(parsed
        .proposals
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let [scale, row, col] = e.grid_origin.unwrap_or([0, i, 0]);
            KeypointProposal {
                keypoints: e.keypoints.iter().map(|&[x, y]| Pixel2::new(x, y)).collect(),
                raw_confidence: e.confidence,
                class_scores: e.class_scores,
                grid_origin: GridOrigin { scale, row, col },
            }
        })
        .collect())
}

pub fn save_proposals(proposals: &[KeypointProposal], path: &Path) -> Result<()> {
    let file = ProposalsFile {
        version: PROPOSAL_SCHEMA_VERSION,
        proposals: proposals
            .iter()
            .map(|p| ProposalEntry {
                keypoints: p.keypoints.iter().map(|kp| [kp.x, kp.y]).collect(),
                confidence: p.raw_confidence,
                class_scores: p.class_scores.clone(),
                grid_origin: Some([p.grid_origin.scale, p.grid_origin.row, p.grid_origin.col]),
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file).map_err(Error::from_json)?)?;
    Ok(())
}

impl Error {
    fn from_json(e: serde_json::Error) -> Self {
        Error::Config(format!("json: {e}"))
    }
}
