//! On-disk records written by `run` and read by `eval`.

use serde::{Deserialize, Serialize};

use rotmerge_core::backend::BackendConfig;
use rotmerge_core::pipeline::MergeCandidate;
use rotmerge_core::Quad;

/// One line of `detections.jsonl`: the wire detection fields plus the
/// fused score and the rotation the detection came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image: String,
    pub polygon: Vec<f64>,
    pub text: String,
    pub det_score: f64,
    pub rec_score: f64,
    pub score: f64,
    pub source_angle: f64,
}

impl DetectionRecord {
    pub fn new(image: &str, c: &MergeCandidate) -> Self {
        Self {
            image: image.to_owned(),
            polygon: c.quad.to_flat().to_vec(),
            text: c.text.clone(),
            det_score: c.det_score,
            rec_score: c.rec_score,
            score: c.score,
            source_angle: c.source_angle,
        }
    }

    pub fn to_candidate(&self) -> Result<MergeCandidate, String> {
        let quad = Quad::from_flat(&self.polygon).map_err(|e| e.to_string())?;
        for v in [self.det_score, self.rec_score, self.score] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("score {v} outside [0, 1]"));
            }
        }
        Ok(MergeCandidate {
            quad,
            text: self.text.clone(),
            det_score: self.det_score,
            rec_score: self.rec_score,
            score: self.score,
            source_angle: self.source_angle,
        })
    }
}

/// Everything that affects the detections. Parallelism is left out: it
/// never changes results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub rotation_step: f64,
    pub nms_iou: f64,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Scene,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub id: String,
    pub kind: InputKind,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<InputRecord>,
    /// Final detections per input id, in input order.
    pub detections: Vec<ImageDetections>,
    /// Per-rotation timings live in a sibling file so the manifest itself
    /// stays byte-stable across runs.
    pub timings_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub image: String,
    pub detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRecord {
    pub image: String,
    pub angle: f64,
    pub millis: f64,
    pub detections: usize,
}
