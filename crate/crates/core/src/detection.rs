//! Detections, ground truth and frames.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Pixel};

/// Number of evaluated classes unless configured otherwise.
pub const DEFAULT_NUM_CLASSES: usize = 30;

const LABEL_SUM_SLACK: f64 = 1e-6;

/// Symmetric 2x2 corner covariance in pixels², stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CornerCovariance {
    cxx: f64,
    cxy: f64,
    cyy: f64,
}

impl CornerCovariance {
    pub const ZERO: CornerCovariance = CornerCovariance {
        cxx: 0.0,
        cxy: 0.0,
        cyy: 0.0,
    };

    pub fn new(cxx: f64, cxy: f64, cyy: f64) -> Result<Self> {
        if ![cxx, cxy, cyy].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        if cxx < 0.0 || cyy < 0.0 || cxx * cyy - cxy * cxy < 0.0 {
            return Err(Error::InvalidCovariance(format!(
                "[[{cxx}, {cxy}], [{cxy}, {cyy}]] is not positive semi-definite"
            )));
        }
        Ok(Self { cxx, cxy, cyy })
    }

    pub fn diagonal(var_x: f64, var_y: f64) -> Result<Self> {
        Self::new(var_x, 0.0, var_y)
    }

    pub fn cxx(&self) -> f64 {
        self.cxx
    }

    pub fn cxy(&self) -> f64 {
        self.cxy
    }

    pub fn cyy(&self) -> f64 {
        self.cyy
    }

    pub fn is_diagonal(&self) -> bool {
        self.cxy == 0.0
    }

    pub fn as_matrix(&self) -> [[f64; 2]; 2] {
        [[self.cxx, self.cxy], [self.cxy, self.cyy]]
    }

    pub(crate) fn mean_of<'a>(covs: impl ExactSizeIterator<Item = &'a CornerCovariance>) -> Self {
        let n = covs.len() as f64;
        let mut acc = CornerCovariance::ZERO;
        for c in covs {
            acc.cxx += c.cxx;
            acc.cxy += c.cxy;
            acc.cyy += c.cyy;
        }
        CornerCovariance {
            cxx: acc.cxx / n,
            cxy: acc.cxy / n,
            cyy: acc.cyy / n,
        }
    }
}

/// A box whose two corners are independent 2D Gaussians.
///
/// Only diagonal covariances are accepted: the heatmap treats each coordinate
/// marginal independently, which is exact only without correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilisticBox {
    bbox: BoundingBox,
    cov_top_left: CornerCovariance,
    cov_bottom_right: CornerCovariance,
}

impl ProbabilisticBox {
    pub fn new(
        bbox: BoundingBox,
        cov_top_left: CornerCovariance,
        cov_bottom_right: CornerCovariance,
    ) -> Result<Self> {
        for cov in [&cov_top_left, &cov_bottom_right] {
            if !cov.is_diagonal() {
                return Err(Error::NonDiagonalCovariance { cxy: cov.cxy });
            }
        }
        Ok(Self {
            bbox,
            cov_top_left,
            cov_bottom_right,
        })
    }

    /// Box with deterministic corners.
    pub fn crisp(bbox: BoundingBox) -> Self {
        Self {
            bbox,
            cov_top_left: CornerCovariance::ZERO,
            cov_bottom_right: CornerCovariance::ZERO,
        }
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn cov_top_left(&self) -> &CornerCovariance {
        &self.cov_top_left
    }

    pub fn cov_bottom_right(&self) -> &CornerCovariance {
        &self.cov_bottom_right
    }

    pub fn with_bbox(&self, bbox: BoundingBox) -> Self {
        Self { bbox, ..*self }
    }
}

/// Per-class probabilities. Sub-normalized vectors are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidLabels("empty label vector".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0 || **p > 1.0)
        {
            return Err(Error::InvalidLabels(format!("entry {i} = {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if sum > 1.0 + LABEL_SUM_SLACK {
            return Err(Error::InvalidLabels(format!("entries sum to {sum} > 1")));
        }
        Ok(Self(probs))
    }

    /// `score` on `class_id`, zero elsewhere.
    pub fn one_hot(num_classes: usize, class_id: usize, score: f64) -> Result<Self> {
        if class_id >= num_classes {
            return Err(Error::InvalidLabels(format!(
                "class {class_id} out of range for {num_classes} classes"
            )));
        }
        let mut probs = vec![0.0; num_classes];
        probs[class_id] = score;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class_id: usize) -> f64 {
        self.0.get(class_id).copied().unwrap_or(0.0)
    }

    /// Highest probability and its class; ties go to the lowest class id.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, self.0[0]);
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > best.1 {
                best = (i, p);
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.argmax().1
    }

    pub(crate) fn mean_of<'a>(labels: impl ExactSizeIterator<Item = &'a LabelVector>) -> Self {
        let n = labels.len() as f64;
        let mut acc: Vec<f64> = Vec::new();
        for l in labels {
            if acc.is_empty() {
                acc = vec![0.0; l.len()];
            }
            for (a, p) in acc.iter_mut().zip(&l.0) {
                *a += p;
            }
        }
        for a in &mut acc {
            *a = (*a / n).clamp(0.0, 1.0);
        }
        LabelVector(acc)
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        LabelVector(probs)
    }
}

/// Identifier of the detector or dropout pass that produced a detection.
pub type SourceId = Arc<str>;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pbox: ProbabilisticBox,
    labels: LabelVector,
    source_id: SourceId,
    raw_score: f64,
}

impl Detection {
    pub fn new(pbox: ProbabilisticBox, labels: LabelVector, source_id: impl Into<SourceId>) -> Self {
        let raw_score = labels.max();
        Self {
            pbox,
            labels,
            source_id: source_id.into(),
            raw_score,
        }
    }

    pub fn pbox(&self) -> &ProbabilisticBox {
        &self.pbox
    }

    pub fn bbox(&self) -> &BoundingBox {
        self.pbox.bbox()
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn source_id(&self) -> &SourceId {
        &self.source_id
    }

    /// Maximum label probability.
    pub fn raw_score(&self) -> f64 {
        self.raw_score
    }

    pub fn predicted_class(&self) -> usize {
        self.labels.argmax().0
    }

    pub fn with_labels(&self, labels: LabelVector) -> Self {
        Self::new(self.pbox, labels, self.source_id.clone())
    }

    pub fn with_pbox(&self, pbox: ProbabilisticBox) -> Self {
        Self {
            pbox,
            ..self.clone()
        }
    }

    pub fn with_bbox(&self, bbox: BoundingBox) -> Self {
        self.with_pbox(self.pbox.with_bbox(bbox))
    }
}

/// Sorted (row-major) set of pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask(Vec<Pixel>);

impl PixelMask {
    pub fn new(mut pixels: Vec<Pixel>) -> Self {
        pixels.sort_unstable_by_key(|p| (p.y, p.x));
        pixels.dedup();
        Self(pixels)
    }

    pub fn pixels(&self) -> &[Pixel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    class_id: usize,
    bbox: BoundingBox,
    mask: Option<PixelMask>,
}

impl GroundTruthObject {
    pub fn new(class_id: usize, bbox: BoundingBox, mask: Option<PixelMask>) -> Result<Self> {
        if let Some(mask) = &mask {
            if mask.is_empty() {
                return Err(Error::InvalidGroundTruth("mask is empty".into()));
            }
            if let Some(p) = mask.pixels().iter().find(|p| !bbox.contains_pixel(**p)) {
                return Err(Error::InvalidGroundTruth(format!(
                    "mask pixel ({}, {}) lies outside the box {:?}",
                    p.x,
                    p.y,
                    bbox.corners()
                )));
            }
        }
        Ok(Self {
            class_id,
            bbox,
            mask,
        })
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn mask(&self) -> Option<&PixelMask> {
        self.mask.as_ref()
    }

    /// Number of pixels of the true bounding box.
    pub fn box_pixel_count(&self) -> usize {
        self.bbox.pixel_rect().len()
    }
}

/// The object's foreground pixels: its mask, or the box pixels when it has none.
pub fn mask_of(gt: &GroundTruthObject) -> PixelMask {
    match &gt.mask {
        Some(mask) => mask.clone(),
        None => PixelMask(gt.bbox.pixel_rect().pixels().collect()),
    }
}

/// One image: detections to score against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub detections: Vec<Detection>,
    pub ground_truths: Vec<GroundTruthObject>,
}

impl Frame {
    pub fn new(
        frame_id: u64,
        image_width: u32,
        image_height: u32,
        detections: Vec<Detection>,
        ground_truths: Vec<GroundTruthObject>,
    ) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::InvalidBox(format!(
                "frame {frame_id}: image size {image_width}x{image_height} is empty"
            )));
        }
        let outside = detections
            .iter()
            .map(Detection::bbox)
            .chain(ground_truths.iter().map(GroundTruthObject::bbox))
            .find(|b| !b.within(image_width, image_height));
        if let Some(b) = outside {
            return Err(Error::InvalidBox(format!(
                "frame {frame_id}: box {:?} exceeds the {image_width}x{image_height} image",
                b.corners()
            )));
        }
        Ok(Self {
            frame_id,
            image_width,
            image_height,
            detections,
            ground_truths,
        })
    }
}

/// Detection sources of one frame, before fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceFrame {
    pub frame_id: u64,
    pub image_width: u32,
    pub image_height: u32,
    /// One list per detector or dropout pass, in source order.
    pub sources: Vec<Vec<Detection>>,
}

/// Final detections of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame_id: u64,
    pub image_width: u32,
    pub image_height: u32,
    pub detections: Vec<Detection>,
}

impl SourceFrame {
    /// All sources concatenated, without fusion.
    pub fn flattened(&self) -> DetectionFrame {
        DetectionFrame {
            frame_id: self.frame_id,
            image_width: self.image_width,
            image_height: self.image_height,
            detections: self.sources.iter().flatten().cloned().collect(),
        }
    }
}
