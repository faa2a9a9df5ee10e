//! File formats: detection and ground-truth sequences, configuration, the
//! detection cache, plus helpers to align them into frames.
//!
//! Every file is one video sequence and carries `schema_version = 1`.
//! Writers go through a temporary file in the target directory and rename it
//! into place, so a failed run never leaves a partial output.

mod cache;
mod config;
pub mod rle;
pub mod schema;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use log::warn;

pub use cache::{cache_detections, DetectionCache, CACHE_MANIFEST};
pub use config::{load_config, load_grid, parse_config, parse_grid};

use crate::detection::{
    CornerCovariance, Detection, DetectionFrame, Frame, GroundTruthObject, LabelVector, PixelMask,
    ProbabilisticBox, SourceFrame,
};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use rle::Rle;
use schema::*;

/// A loaded value plus the normalizations applied while loading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSequence {
    pub num_classes: usize,
    pub class_names: Option<Vec<String>>,
    pub frames: Vec<DetectionFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub frame_id: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub objects: Vec<GroundTruthObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSequence {
    pub class_names: Vec<String>,
    pub frames: Vec<GroundTruthFrame>,
}

impl GroundTruthSequence {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn check_version(version: u32, path: &Path) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unsupported schema_version {version} (expected {SCHEMA_VERSION})"),
        });
    }
    Ok(())
}

struct Ctx<'a> {
    frame_id: u64,
    item: &'static str,
    index: usize,
    warnings: &'a mut Vec<String>,
}

impl Ctx<'_> {
    fn err(&self, field: &'static str, message: impl Into<String>) -> Error {
        Error::Schema {
            frame_id: self.frame_id,
            item: self.item,
            index: self.index,
            field,
            message: message.into(),
        }
    }

    fn warn(&mut self, message: String) {
        let msg = format!("frame {}, {} {}: {message}", self.frame_id, self.item, self.index);
        warn!("{msg}");
        self.warnings.push(msg);
    }

    /// Validates, reorders swapped corners and clamps to the image.
    fn bbox(&mut self, raw: [f64; 4], width: u32, height: u32) -> Result<BoundingBox> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(self.err("bbox", format!("non-finite coordinate in {raw:?}")));
        }
        let [mut x1, mut y1, mut x2, mut y2] = raw;
        if x1 > x2 {
            std::mem::swap(&mut x1, &mut x2);
            self.warn(format!("bbox x1 > x2 in {raw:?}; swapped"));
        }
        if y1 > y2 {
            std::mem::swap(&mut y1, &mut y2);
            self.warn(format!("bbox y1 > y2 in {raw:?}; swapped"));
        }
        let b = BoundingBox::new(x1, y1, x2, y2).map_err(|e| self.err("bbox", e.to_string()))?;
        if !b.within(width, height) {
            self.warn(format!("bbox {raw:?} clamped to the {width}x{height} image"));
        }
        Ok(b.clamp_to(width, height))
    }
}

fn check_image(frame_id: u64, width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Schema {
            frame_id,
            item: "frame",
            index: 0,
            field: "image_width/image_height",
            message: format!("empty image {width}x{height}"),
        });
    }
    Ok(())
}

fn detection_from_doc(doc: &DetectionDoc, k: usize, default_source: &str, ctx: &mut Ctx, w: u32, h: u32) -> Result<Detection> {
    if doc.label_probs.len() != k {
        return Err(ctx.err(
            "label_probs",
            format!("expected {k} probabilities, found {}", doc.label_probs.len()),
        ));
    }
    let labels = LabelVector::new(doc.label_probs.clone()).map_err(|e| ctx.err("label_probs", e.to_string()))?;
    let bbox = ctx.bbox(doc.bbox, w, h)?;
    let pbox = match &doc.covars {
        None => ProbabilisticBox::crisp(bbox),
        Some([tl, br]) => {
            let corner = |m: &[[f64; 2]; 2]| -> Result<CornerCovariance> {
                if m[0][1] != m[1][0] {
                    return Err(ctx.err("covars", format!("asymmetric matrix {m:?}")));
                }
                CornerCovariance::new(m[0][0], m[0][1], m[1][1]).map_err(|e| ctx.err("covars", e.to_string()))
            };
            let (tl, br) = (corner(tl)?, corner(br)?);
            ProbabilisticBox::new(bbox, tl, br).map_err(|e| ctx.err("covars", e.to_string()))?
        }
    };
    let source = doc.source_id.as_deref().unwrap_or(default_source);
    Ok(Detection::new(pbox, labels, source))
}

/// Parses a detection document. `default_source` names detections that carry
/// no `source_id` when the file sets none either.
pub fn parse_detections(text: &str, path: &Path, default_source: &str) -> Result<Loaded<DetectionSequence>> {
    let doc: DetectionFileDoc = parse_json(text, path)?;
    check_version(doc.schema_version, path)?;
    let default_source = doc.source_id.as_deref().unwrap_or(default_source);
    let k = doc.num_classes;
    if k == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "num_classes must be positive".into(),
        });
    }
    let mut warnings = Vec::new();
    let mut frames = Vec::with_capacity(doc.frames.len());
    for f in &doc.frames {
        check_image(f.frame_id, f.image_width, f.image_height).map_err(|e| e.in_file(path))?;
        let mut detections = Vec::with_capacity(f.detections.len());
        for (index, d) in f.detections.iter().enumerate() {
            let mut ctx = Ctx {
                frame_id: f.frame_id,
                item: "detection",
                index,
                warnings: &mut warnings,
            };
            let det = detection_from_doc(d, k, default_source, &mut ctx, f.image_width, f.image_height)
                .map_err(|e| e.in_file(path))?;
            detections.push(det);
        }
        frames.push(DetectionFrame {
            frame_id: f.frame_id,
            image_width: f.image_width,
            image_height: f.image_height,
            detections,
        });
    }
    check_unique_ids(frames.iter().map(|f| f.frame_id)).map_err(|e| e.in_file(path))?;
    Ok(Loaded {
        value: DetectionSequence {
            num_classes: k,
            class_names: doc.class_names,
            frames,
        },
        warnings,
    })
}

fn check_unique_ids(ids: impl Iterator<Item = u64>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::FrameMismatch(format!("frame {id} appears twice")));
        }
    }
    Ok(())
}

/// Loads a detection file; detections without a source id are attributed to the file stem.
pub fn load_detections(path: impl AsRef<Path>) -> Result<Loaded<DetectionSequence>> {
    let path = path.as_ref();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("detections");
    parse_detections(&read_text(path)?, path, stem)
}

pub fn detections_to_doc(seq: &DetectionSequence) -> DetectionFileDoc {
    let corner = |c: &CornerCovariance| c.as_matrix();
    DetectionFileDoc {
        schema_version: SCHEMA_VERSION,
        num_classes: seq.num_classes,
        source_id: None,
        class_names: seq.class_names.clone(),
        frames: seq
            .frames
            .iter()
            .map(|f| DetectionFrameDoc {
                frame_id: f.frame_id,
                image_width: f.image_width,
                image_height: f.image_height,
                detections: f
                    .detections
                    .iter()
                    .map(|d| DetectionDoc {
                        label_probs: d.labels().probs().to_vec(),
                        bbox: d.bbox().corners(),
                        covars: Some([corner(d.pbox().cov_top_left()), corner(d.pbox().cov_bottom_right())]),
                        source_id: Some(d.source_id().to_string()),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn detections_to_json(seq: &DetectionSequence) -> String {
    let mut s = serde_json::to_string_pretty(&detections_to_doc(seq)).expect("serializable document");
    s.push('\n');
    s
}

pub fn save_detections(path: impl AsRef<Path>, seq: &DetectionSequence) -> Result<()> {
    write_atomic(path.as_ref(), detections_to_json(seq).as_bytes())
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Loaded<GroundTruthSequence>> {
    let doc: GroundTruthFileDoc = parse_json(text, path)?;
    check_version(doc.schema_version, path)?;
    let k = doc.classes.len();
    if k == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "class table is empty".into(),
        });
    }
    let mut warnings = Vec::new();
    let mut frames = Vec::with_capacity(doc.frames.len());
    for f in &doc.frames {
        check_image(f.frame_id, f.image_width, f.image_height).map_err(|e| e.in_file(path))?;
        let mut objects = Vec::with_capacity(f.objects.len());
        for (index, o) in f.objects.iter().enumerate() {
            let mut ctx = Ctx {
                frame_id: f.frame_id,
                item: "object",
                index,
                warnings: &mut warnings,
            };
            let obj = (|| {
                if o.class_id >= k {
                    return Err(ctx.err("class_id", format!("{} outside [0, {k})", o.class_id)));
                }
                let bbox = ctx.bbox(o.bbox, f.image_width, f.image_height)?;
                let mask = match &o.mask {
                    None => None,
                    Some(rle) => {
                        if rle.size != [f.image_height, f.image_width] {
                            return Err(ctx.err(
                                "mask",
                                format!(
                                    "size {:?} does not match the {}x{} image",
                                    rle.size, f.image_width, f.image_height
                                ),
                            ));
                        }
                        let px = rle.decode().map_err(|m| ctx.err("mask", m))?;
                        Some(PixelMask::new(px))
                    }
                };
                GroundTruthObject::new(o.class_id, bbox, mask).map_err(|e| ctx.err("mask", e.to_string()))
            })()
            .map_err(|e| e.in_file(path))?;
            objects.push(obj);
        }
        frames.push(GroundTruthFrame {
            frame_id: f.frame_id,
            image_width: f.image_width,
            image_height: f.image_height,
            objects,
        });
    }
    check_unique_ids(frames.iter().map(|f| f.frame_id)).map_err(|e| e.in_file(path))?;
    Ok(Loaded {
        value: GroundTruthSequence {
            class_names: doc.classes,
            frames,
        },
        warnings,
    })
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Loaded<GroundTruthSequence>> {
    let path = path.as_ref();
    parse_ground_truth(&read_text(path)?, path)
}

pub fn ground_truth_to_json(seq: &GroundTruthSequence) -> String {
    let doc = GroundTruthFileDoc {
        schema_version: SCHEMA_VERSION,
        classes: seq.class_names.clone(),
        frames: seq
            .frames
            .iter()
            .map(|f| GroundTruthFrameDoc {
                frame_id: f.frame_id,
                image_width: f.image_width,
                image_height: f.image_height,
                objects: f
                    .objects
                    .iter()
                    .map(|o| GroundTruthDoc {
                        class_id: o.class_id(),
                        bbox: o.bbox().corners(),
                        mask: o.mask().map(|m| Rle::encode(m.pixels(), f.image_width, f.image_height)),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable document");
    s.push('\n');
    s
}

pub fn save_ground_truth(path: impl AsRef<Path>, seq: &GroundTruthSequence) -> Result<()> {
    write_atomic(path.as_ref(), ground_truth_to_json(seq).as_bytes())
}

/// Aligns detection files by frame id and groups each frame's detections into
/// sources by `source_id`, in order of first appearance. Frames come out sorted by id.
pub fn group_sources(sequences: &[DetectionSequence]) -> Result<Vec<SourceFrame>> {
    if let Some(k) = sequences.first().map(|s| s.num_classes) {
        if let Some(s) = sequences.iter().find(|s| s.num_classes != k) {
            return Err(Error::LabelLengthMismatch {
                expected: k,
                found: s.num_classes,
            });
        }
    }
    let mut frames: BTreeMap<u64, SourceFrame> = BTreeMap::new();
    let mut order: BTreeMap<u64, Vec<std::sync::Arc<str>>> = BTreeMap::new();
    for seq in sequences {
        for f in &seq.frames {
            let entry = frames.entry(f.frame_id).or_insert_with(|| SourceFrame {
                frame_id: f.frame_id,
                image_width: f.image_width,
                image_height: f.image_height,
                sources: Vec::new(),
            });
            if (entry.image_width, entry.image_height) != (f.image_width, f.image_height) {
                return Err(Error::FrameMismatch(format!(
                    "frame {}: image size {}x{} disagrees with {}x{}",
                    f.frame_id, f.image_width, f.image_height, entry.image_width, entry.image_height
                )));
            }
            let ids = order.entry(f.frame_id).or_default();
            for d in &f.detections {
                let slot = match ids.iter().position(|s| s == d.source_id()) {
                    Some(i) => i,
                    None => {
                        ids.push(d.source_id().clone());
                        entry.sources.push(Vec::new());
                        ids.len() - 1
                    }
                };
                entry.sources[slot].push(d.clone());
            }
        }
    }
    Ok(frames.into_values().collect())
}

/// Pairs detection frames with ground truth, in ground-truth order.
///
/// With `strict`, both must cover exactly the same frame ids; otherwise a
/// ground-truth frame without detections is evaluated as empty. Detection
/// frames unknown to the ground truth are always an error.
pub fn build_frames(dets: &[DetectionFrame], gt: &GroundTruthSequence, strict: bool) -> Result<Vec<Frame>> {
    let by_id: BTreeMap<u64, &DetectionFrame> = dets.iter().map(|f| (f.frame_id, f)).collect();
    let gt_ids: std::collections::BTreeSet<u64> = gt.frames.iter().map(|f| f.frame_id).collect();
    if let Some(extra) = by_id.keys().find(|id| !gt_ids.contains(id)) {
        return Err(Error::FrameMismatch(format!("frame {extra} has detections but no ground truth")));
    }
    gt.frames
        .iter()
        .map(|g| {
            let detections = match by_id.get(&g.frame_id) {
                Some(d) => {
                    if (d.image_width, d.image_height) != (g.image_width, g.image_height) {
                        return Err(Error::FrameMismatch(format!(
                            "frame {}: detections are {}x{}, ground truth {}x{}",
                            g.frame_id, d.image_width, d.image_height, g.image_width, g.image_height
                        )));
                    }
                    d.detections.clone()
                }
                None if strict => {
                    return Err(Error::FrameMismatch(format!("frame {} has no detections", g.frame_id)))
                }
                None => Vec::new(),
            };
            Frame::new(g.frame_id, g.image_width, g.image_height, detections, g.objects.clone())
        })
        .collect()
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
