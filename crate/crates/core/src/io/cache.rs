//! Detection cache for sweeps.
//!
//! A cache is a directory:
//!
//! ```text
//! <dir>/manifest.json    sources, frames and per-frame source order
//! <dir>/source-000.json  one detection file per source (same schema as ingest)
//! <dir>/source-001.json
//! ```
//!
//! The manifest records, for every frame, which sources contributed and in
//! what order, so reloading reproduces the fused input exactly. The directory
//! is assembled next to the target and renamed into place.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::schema::{DetectionFileDoc, SCHEMA_VERSION};
use super::{detections_to_doc, parse_detections, write_atomic, DetectionSequence};
use crate::detection::{Detection, DetectionFrame, SourceFrame};
use crate::error::{Error, Result};

pub const CACHE_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: u32,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
    sources: Vec<ManifestSource>,
    frames: Vec<ManifestFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSource {
    source_id: String,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFrame {
    frame_id: u64,
    image_width: u32,
    image_height: u32,
    /// Indices into `sources`, in fusion order.
    sources: Vec<usize>,
}

/// Cached per-frame sources, ready for repeated pipeline runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCache {
    pub dir: PathBuf,
    pub num_classes: usize,
    pub class_names: Option<Vec<String>>,
    pub source_ids: Vec<String>,
    pub frames: Vec<SourceFrame>,
}

fn cache_err(frame_id: u64, source: &str, message: impl Into<String>) -> Error {
    Error::CorruptCache {
        frame_id,
        source_name: source.to_string(),
        message: message.into(),
    }
}

/// Names a source slot by its first detection's source id. Empty slots carry nothing and are skipped.
fn slot_name(slot: &[Detection]) -> Option<&Arc<str>> {
    slot.first().map(|d| d.source_id())
}

/// Writes `frames` to the cache directory `dir`, replacing an existing cache there.
pub fn cache_detections(
    frames: &[SourceFrame],
    num_classes: usize,
    class_names: Option<Vec<String>>,
    dir: impl AsRef<Path>,
) -> Result<DetectionCache> {
    let dir = dir.as_ref();
    let mut source_ids: Vec<String> = Vec::new();
    let mut per_source: Vec<Vec<DetectionFrame>> = Vec::new();
    let mut manifest_frames = Vec::with_capacity(frames.len());
    for f in frames {
        let mut order = Vec::with_capacity(f.sources.len());
        for slot in &f.sources {
            let Some(name) = slot_name(slot) else { continue };
            if let Some(d) = slot.iter().find(|d| d.labels().len() != num_classes) {
                return Err(Error::LabelLengthMismatch {
                    expected: num_classes,
                    found: d.labels().len(),
                });
            }
            let idx = match source_ids.iter().position(|s| **s == **name) {
                Some(i) => i,
                None => {
                    source_ids.push(name.to_string());
                    per_source.push(Vec::new());
                    source_ids.len() - 1
                }
            };
            if order.contains(&idx) {
                return Err(Error::FrameMismatch(format!(
                    "frame {}: two source groups both start with source `{name}`",
                    f.frame_id
                )));
            }
            order.push(idx);
            per_source[idx].push(DetectionFrame {
                frame_id: f.frame_id,
                image_width: f.image_width,
                image_height: f.image_height,
                detections: slot.clone(),
            });
        }
        manifest_frames.push(ManifestFrame {
            frame_id: f.frame_id,
            image_width: f.image_width,
            image_height: f.image_height,
            sources: order,
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        num_classes,
        class_names: class_names.clone(),
        sources: source_ids
            .iter()
            .enumerate()
            .map(|(i, s)| ManifestSource {
                source_id: s.clone(),
                file: format!("source-{i:03}.json"),
            })
            .collect(),
        frames: manifest_frames,
    };

    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if dir.exists() && !dir.join(CACHE_MANIFEST).is_file() {
        return Err(Error::io(
            dir,
            std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                "target exists and is not a detection cache; refusing to overwrite",
            ),
        ));
    }
    let staging = tempfile::Builder::new()
        .prefix(".probdet-cache-")
        .tempdir_in(parent)
        .map_err(|e| Error::io(parent, e))?;
    for (src, frames) in manifest.sources.iter().zip(per_source) {
        let seq = DetectionSequence {
            num_classes,
            class_names: class_names.clone(),
            frames,
        };
        let mut doc = detections_to_doc(&seq);
        doc.source_id = Some(src.source_id.clone());
        let text = serde_json::to_string_pretty(&doc).expect("serializable document") + "\n";
        write_atomic(&staging.path().join(&src.file), text.as_bytes())?;
    }
    let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest") + "\n";
    write_atomic(&staging.path().join(CACHE_MANIFEST), text.as_bytes())?;

    let staged = staging.keep();
    if dir.exists() {
        let old = tempfile::Builder::new()
            .prefix(".probdet-cache-old-")
            .tempdir_in(parent)
            .map_err(|e| Error::io(parent, e))?;
        let backup = old.path().join("cache");
        std::fs::rename(dir, &backup).map_err(|e| Error::io(dir, e))?;
        std::fs::rename(&staged, dir).map_err(|e| Error::io(dir, e))?;
        drop(old);
    } else {
        std::fs::rename(&staged, dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(DetectionCache {
        dir: dir.to_path_buf(),
        num_classes,
        class_names,
        source_ids,
        frames: frames
            .iter()
            .map(|f| SourceFrame {
                sources: f.sources.iter().filter(|s| !s.is_empty()).cloned().collect(),
                ..f.clone()
            })
            .collect(),
    })
}

impl DetectionCache {
    /// Reloads a cache directory. Damaged entries are reported with the frame and source they belong to.
    pub fn open(dir: impl AsRef<Path>) -> Result<DetectionCache> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(CACHE_MANIFEST);
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::Format {
                path: manifest_path,
                message: format!("unsupported schema_version {}", manifest.schema_version),
            });
        }

        let mut tables: Vec<BTreeMap<u64, DetectionFrame>> = Vec::with_capacity(manifest.sources.len());
        for src in &manifest.sources {
            let name = src.source_id.as_str();
            if src.file.contains(['/', '\\']) || src.file.starts_with('.') {
                return Err(Error::Format {
                    path: manifest_path,
                    message: format!("source file name `{}` is not a plain file name", src.file),
                });
            }
            let path = dir.join(&src.file);
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let doc: DetectionFileDoc = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: path.clone(),
                message: format!("source `{name}`: {e}"),
            })?;
            let seq = parse_detections(&text, &path, name).map_err(|e| match e {
                Error::InFile { source, .. } => match *source {
                    Error::Schema { frame_id, .. } => cache_err(frame_id, name, source.to_string()),
                    other => cache_err(doc.frames.first().map_or(0, |f| f.frame_id), name, other.to_string()),
                },
                other => other,
            })?;
            if seq.value.num_classes != manifest.num_classes {
                return Err(cache_err(
                    doc.frames.first().map_or(0, |f| f.frame_id),
                    name,
                    format!("num_classes {} but manifest says {}", seq.value.num_classes, manifest.num_classes),
                ));
            }
            tables.push(seq.value.frames.into_iter().map(|f| (f.frame_id, f)).collect());
        }

        let mut frames = Vec::with_capacity(manifest.frames.len());
        for mf in &manifest.frames {
            let mut sources = Vec::with_capacity(mf.sources.len());
            for &idx in &mf.sources {
                let Some(src) = manifest.sources.get(idx) else {
                    return Err(cache_err(mf.frame_id, &format!("#{idx}"), "unknown source index"));
                };
                let name = src.source_id.as_str();
                let Some(df) = tables[idx].remove(&mf.frame_id) else {
                    return Err(cache_err(mf.frame_id, name, "frame missing from source file"));
                };
                if (df.image_width, df.image_height) != (mf.image_width, mf.image_height) {
                    return Err(cache_err(mf.frame_id, name, "image size disagrees with manifest"));
                }
                if df.detections.is_empty() {
                    return Err(cache_err(mf.frame_id, name, "empty source entry"));
                }
                sources.push(df.detections);
            }
            frames.push(SourceFrame {
                frame_id: mf.frame_id,
                image_width: mf.image_width,
                image_height: mf.image_height,
                sources,
            });
        }
        for (idx, rest) in tables.iter().enumerate() {
            if let Some(id) = rest.keys().next() {
                return Err(cache_err(*id, &manifest.sources[idx].source_id, "frame not listed in manifest"));
            }
        }
        Ok(DetectionCache {
            dir: dir.to_path_buf(),
            num_classes: manifest.num_classes,
            class_names: manifest.class_names,
            source_ids: manifest.sources.into_iter().map(|s| s.source_id).collect(),
            frames,
        })
    }

    pub fn frame_ids(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.frame_id).collect()
    }
}
