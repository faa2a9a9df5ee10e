//! On-disk JSON documents. Field names here are the external contract.

use serde::{Deserialize, Serialize};

use super::rle::Rle;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFileDoc {
    pub schema_version: u32,
    pub num_classes: usize,
    /// Default `source_id` for detections that do not carry one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub frames: Vec<DetectionFrameDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFrameDoc {
    pub frame_id: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub detections: Vec<DetectionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionDoc {
    pub label_probs: Vec<f64>,
    /// `[x1, y1, x2, y2]`
    pub bbox: [f64; 4],
    /// Top-left then bottom-right corner, each a 2x2 matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covars: Option<[[[f64; 2]; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFileDoc {
    pub schema_version: u32,
    /// Evaluated class names; the index is the class id.
    pub classes: Vec<String>,
    pub frames: Vec<GroundTruthFrameDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFrameDoc {
    pub frame_id: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub objects: Vec<GroundTruthDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthDoc {
    pub class_id: usize,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Rle>,
}
