//! Post-processing applied to fused detections before scoring: confidence
//! thresholding, a second low-IoU NMS, center-crop box reduction, label
//! redistribution and box-proportional corner covariances.

use serde::{Deserialize, Serialize};

use crate::detection::{
    CornerCovariance, Detection, DetectionFrame, LabelVector, ProbabilisticBox, SourceFrame,
    DEFAULT_NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{iou, BoundingBox};
use crate::merge::{merge_ensemble, score_order, MergeConfig, MergeStrategy};

/// Steps run after fusion, in configurable order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Threshold,
    Nms,
    Shrink,
    Labels,
    Covariance,
}

impl Stage {
    pub const DEFAULT_ORDER: [Stage; 5] = [
        Stage::Threshold,
        Stage::Nms,
        Stage::Shrink,
        Stage::Labels,
        Stage::Covariance,
    ];
}

fn default_stages() -> Vec<Stage> {
    Stage::DEFAULT_ORDER.to_vec()
}

fn default_num_classes() -> usize {
    DEFAULT_NUM_CLASSES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub confidence_threshold: f64,
    pub box_reduction_ratio: f64,
    pub covariance_scale: f64,
    pub final_nms_iou: f64,
    pub label_smoothing: bool,
    pub merge: MergeConfig,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    /// Divide the redistributed mass by `K - 1` instead of `K`.
    #[serde(default)]
    pub normalize_redistribution: bool,
    /// Only suppress boxes that share the predicted class.
    #[serde(default)]
    pub class_aware_nms: bool,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
}

impl Default for PipelineConfig {
    /// Threshold 0.018, box ratio 0.1, covariance scale 0.3, final NMS IoU 0.3,
    /// most-confident merging.
    fn default() -> Self {
        Self {
            confidence_threshold: 0.018,
            box_reduction_ratio: 0.1,
            covariance_scale: 0.3,
            final_nms_iou: 0.3,
            label_smoothing: true,
            merge: MergeConfig {
                lambda_iou: 0.5,
                strategy: MergeStrategy::MostConfident,
                dropout_premerge: None,
            },
            num_classes: DEFAULT_NUM_CLASSES,
            normalize_redistribution: false,
            class_aware_nms: false,
            stages: default_stages(),
        }
    }
}

impl PipelineConfig {
    /// Every heuristic switched off; the pipeline only concatenates and sorts.
    pub fn identity(num_classes: usize) -> Self {
        Self {
            confidence_threshold: 0.0,
            box_reduction_ratio: 0.0,
            covariance_scale: 0.0,
            final_nms_iou: 1.0,
            label_smoothing: false,
            merge: MergeConfig {
                lambda_iou: 1.0,
                strategy: MergeStrategy::MostConfident,
                dropout_premerge: None,
            },
            num_classes,
            normalize_redistribution: false,
            class_aware_nms: false,
            stages: default_stages(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return bad(format!("confidence_threshold = {} outside [0, 1]", self.confidence_threshold));
        }
        if !(0.0..1.0).contains(&self.box_reduction_ratio) {
            return bad(format!("box_reduction_ratio = {} outside [0, 1)", self.box_reduction_ratio));
        }
        if !(self.covariance_scale >= 0.0 && self.covariance_scale.is_finite()) {
            return bad(format!("covariance_scale = {} must be >= 0", self.covariance_scale));
        }
        if !(0.0..=1.0).contains(&self.final_nms_iou) {
            return bad(format!("final_nms_iou = {} outside [0, 1]", self.final_nms_iou));
        }
        if self.num_classes < 2 {
            return bad(format!("num_classes = {} must be at least 2", self.num_classes));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if self.stages[..i].contains(s) {
                return bad(format!("stage {s:?} listed twice"));
            }
        }
        self.merge.validate()
    }
}

/// Keeps detections scoring at least `t`, preserving order.
pub fn threshold_filter(dets: Vec<Detection>, t: f64) -> Vec<Detection> {
    dets.into_iter().filter(|d| d.raw_score() >= t).collect()
}

/// Center crop: width and height each shrink by `ratio`.
pub fn shrink_box(b: &BoundingBox, ratio: f64) -> BoundingBox {
    let (dx, dy) = (0.5 * ratio * b.width(), 0.5 * ratio * b.height());
    BoundingBox::new(b.x1() + dx, b.y1() + dy, b.x2() - dx, b.y2() - dy)
        .expect("a crop with ratio < 1 keeps corners ordered")
}

/// The top entry `S` keeps its value; every other entry becomes `(1 - S) / divisor`.
///
/// `divisor` is `K` for the verbatim heuristic, `K - 1` for the normalized variant.
/// With the `K` divisor the result sums to `S + (K - 1)(1 - S) / K < 1`.
pub fn redistribute_labels_with(labels: &LabelVector, divisor: f64) -> LabelVector {
    let (top, score) = labels.argmax();
    let rest = (1.0 - score) / divisor;
    let probs = (0..labels.len())
        .map(|i| if i == top { score } else { rest })
        .collect();
    LabelVector::from_raw(probs)
}

pub fn redistribute_labels(labels: &LabelVector, num_classes: usize) -> LabelVector {
    redistribute_labels_with(labels, num_classes as f64)
}

/// Both corners get `diag(scale * width, scale * height)`.
pub fn assign_covariance(b: &BoundingBox, scale: f64) -> ProbabilisticBox {
    let cov = CornerCovariance::diagonal(scale * b.width(), scale * b.height())
        .expect("scaled box extents are non-negative");
    ProbabilisticBox::new(*b, cov, cov).expect("diagonal covariance")
}

/// Hard NMS: in score order, keep a detection iff its IoU with every kept one is below `iou_threshold`.
pub fn final_nms(dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    nms(dets, iou_threshold, false)
}

pub fn class_aware_nms(dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    nms(dets, iou_threshold, true)
}

fn nms(dets: Vec<Detection>, iou_threshold: f64, per_class: bool) -> Vec<Detection> {
    let order = score_order(&dets);
    let mut kept: Vec<usize> = Vec::with_capacity(dets.len());
    for i in order {
        let suppressed = kept.iter().any(|&k| {
            (!per_class || dets[k].predicted_class() == dets[i].predicted_class())
                && iou(dets[k].bbox(), dets[i].bbox()) >= iou_threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    let mut slots: Vec<Option<Detection>> = dets.into_iter().map(Some).collect();
    kept.into_iter().filter_map(|i| slots[i].take()).collect()
}

fn check_labels(sources: &[Vec<Detection>], k: usize) -> Result<()> {
    match sources.iter().flatten().find(|d| d.labels().len() != k) {
        Some(d) => Err(Error::LabelLengthMismatch {
            expected: k,
            found: d.labels().len(),
        }),
        None => Ok(()),
    }
}

/// Fuses one frame's sources and applies the configured stages.
pub fn process_sources(sources: &[Vec<Detection>], config: &PipelineConfig) -> Result<Vec<Detection>> {
    check_labels(sources, config.num_classes)?;
    let mut dets = merge_ensemble(sources, &config.merge)?;
    let divisor = if config.normalize_redistribution {
        (config.num_classes - 1) as f64
    } else {
        config.num_classes as f64
    };
    for stage in &config.stages {
        dets = match stage {
            Stage::Threshold => threshold_filter(dets, config.confidence_threshold),
            Stage::Nms if config.class_aware_nms => class_aware_nms(dets, config.final_nms_iou),
            Stage::Nms => final_nms(dets, config.final_nms_iou),
            Stage::Shrink => dets
                .into_iter()
                .map(|d| d.with_bbox(shrink_box(d.bbox(), config.box_reduction_ratio)))
                .collect(),
            Stage::Labels if config.label_smoothing => dets
                .into_iter()
                .map(|d| d.with_labels(redistribute_labels_with(d.labels(), divisor)))
                .collect(),
            Stage::Labels => dets,
            Stage::Covariance => dets
                .into_iter()
                .map(|d| d.with_pbox(assign_covariance(d.bbox(), config.covariance_scale)))
                .collect(),
        };
    }
    Ok(dets)
}

pub fn run_pipeline(frames: &[SourceFrame], config: &PipelineConfig) -> Result<Vec<DetectionFrame>> {
    run_pipeline_with(frames, config, Execution::default())
}

pub fn run_pipeline_with(
    frames: &[SourceFrame],
    config: &PipelineConfig,
    exec: Execution,
) -> Result<Vec<DetectionFrame>> {
    config.validate()?;
    exec.try_map(frames, |f| {
        Ok(DetectionFrame {
            frame_id: f.frame_id,
            image_width: f.image_width,
            image_height: f.image_height,
            detections: process_sources(&f.sources, config)?,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(b: BoundingBox, score: f64) -> Detection {
        Detection::new(
            ProbabilisticBox::crisp(b),
            LabelVector::one_hot(30, 0, score).unwrap(),
            "s",
        )
    }

    #[test]
    fn threshold_examples() {
        let dets: Vec<Detection> = [0.9, 0.4, 0.017]
            .iter()
            .map(|&s| det(bb(0.0, 0.0, 1.0, 1.0), s))
            .collect();
        assert_eq!(threshold_filter(dets.clone(), 0.0), dets);
        assert_eq!(threshold_filter(dets.clone(), 0.018), dets[..2].to_vec());
        assert!(threshold_filter(dets, 1.0).is_empty());
    }

    #[test]
    fn shrink_examples() {
        let b = bb(0.0, 0.0, 100.0, 50.0);
        assert_eq!(shrink_box(&b, 0.0), b);
        let s = shrink_box(&b, 0.1);
        assert_eq!(s.corners(), [5.0, 2.5, 95.0, 47.5]);
        assert_eq!(s.area(), 4050.0);
        assert_eq!(s.area() / b.area(), 0.81);
        assert_eq!(shrink_box(&bb(0.0, 0.0, 10.0, 10.0), 0.5).corners(), [2.5, 2.5, 7.5, 7.5]);
    }

    #[test]
    fn redistribution_examples() {
        let l = LabelVector::one_hot(30, 4, 0.7).unwrap();
        let r = redistribute_labels(&l, 30);
        assert_eq!(r.get(4), 0.7);
        assert!((0..30).filter(|&i| i != 4).all(|i| (r.get(i) - 0.01).abs() < 1e-15));

        let r = redistribute_labels(&LabelVector::one_hot(30, 0, 1.0).unwrap(), 30);
        assert_eq!(r.probs().iter().sum::<f64>(), 1.0);

        let r = redistribute_labels(&LabelVector::one_hot(30, 2, 0.4).unwrap(), 30);
        assert!((r.get(0) - 0.02).abs() < 1e-15);
        assert!((r.probs().iter().sum::<f64>() - 0.98).abs() < 1e-12);

        let r = redistribute_labels_with(&LabelVector::one_hot(30, 2, 0.4).unwrap(), 29.0);
        assert!((r.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_examples() {
        let p = assign_covariance(&bb(0.0, 0.0, 50.0, 60.0), 0.10);
        assert_eq!(p.cov_top_left().as_matrix(), [[5.0, 0.0], [0.0, 6.0]]);
        assert_eq!(p.cov_bottom_right().as_matrix(), [[5.0, 0.0], [0.0, 6.0]]);
        let p = assign_covariance(&bb(0.0, 0.0, 50.0, 60.0), 0.3);
        assert_eq!(p.cov_top_left().as_matrix(), [[15.0, 0.0], [0.0, 18.0]]);
        let p = assign_covariance(&bb(0.0, 0.0, 50.0, 60.0), 0.0);
        assert_eq!(*p.cov_top_left(), CornerCovariance::ZERO);
    }

    #[test]
    fn nms_examples() {
        let a = det(bb(0.0, 0.0, 10.0, 10.0), 0.8);
        let b = det(bb(0.0, 0.0, 10.0, 10.0), 0.9);
        let c = det(bb(20.0, 0.0, 30.0, 10.0), 0.5);
        assert_eq!(final_nms(vec![a.clone(), b.clone(), c.clone()], 1.0), vec![b.clone(), c.clone()]);
        // IoU 0.4
        let d = det(bb(0.0, 0.0, 10.0, 10.0), 0.9);
        let e = det(bb(0.0, 0.0, 10.0, 4.0), 0.8);
        assert!((iou(d.bbox(), e.bbox()) - 0.4).abs() < 1e-12);
        assert_eq!(final_nms(vec![e.clone(), d.clone()], 0.3), vec![d.clone()]);
        assert_eq!(final_nms(vec![e.clone(), d.clone()], 0.5), vec![d, e]);
    }

    #[test]
    fn class_aware_nms_keeps_other_classes() {
        let a = det(bb(0.0, 0.0, 10.0, 10.0), 0.9);
        let b = Detection::new(
            ProbabilisticBox::crisp(bb(0.0, 0.0, 10.0, 10.0)),
            LabelVector::one_hot(30, 3, 0.8).unwrap(),
            "s",
        );
        assert_eq!(final_nms(vec![a.clone(), b.clone()], 0.5).len(), 1);
        assert_eq!(class_aware_nms(vec![a, b], 0.5).len(), 2);
    }

    #[test]
    fn identity_pipeline_sorts_only() {
        let dets = vec![det(bb(0.0, 0.0, 4.0, 4.0), 0.3), det(bb(5.0, 5.0, 9.0, 9.0), 0.6)];
        let out = process_sources(std::slice::from_ref(&dets), &PipelineConfig::identity(30)).unwrap();
        assert_eq!(out, vec![dets[1].clone(), dets[0].clone()]);
    }

    #[test]
    fn single_detection_gets_covariance() {
        let out = process_sources(&[vec![det(bb(0.0, 0.0, 50.0, 60.0), 0.9)]], &PipelineConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        let cov = out[0].pbox().cov_top_left();
        assert!(cov.is_diagonal() && cov.cxx() > 0.0 && cov.cyy() > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let mut c = PipelineConfig::default();
        c.box_reduction_ratio = 1.0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.stages = vec![Stage::Nms, Stage::Nms];
        assert!(c.validate().is_err());
        let c = PipelineConfig::default();
        let wrong_k = vec![vec![Detection::new(
            ProbabilisticBox::crisp(bb(0.0, 0.0, 1.0, 1.0)),
            LabelVector::one_hot(5, 0, 0.9).unwrap(),
            "s",
        )]];
        assert!(matches!(process_sources(&wrong_k, &c), Err(Error::LabelLengthMismatch { .. })));
    }

    proptest! {
        #[test]
        fn shrink_preserves_center_and_scales_area(
            x in 0.0..500.0f64, y in 0.0..500.0f64, w in 0.1..300.0f64, h in 0.1..300.0f64,
            ratio in 0.0..0.99f64,
        ) {
            let b = bb(x, y, x + w, y + h);
            let s = shrink_box(&b, ratio);
            let (c0, c1) = (b.center(), s.center());
            prop_assert!((c0.0 - c1.0).abs() < 1e-9 && (c0.1 - c1.1).abs() < 1e-9);
            let want = (1.0 - ratio).powi(2) * b.area();
            prop_assert!((s.area() - want).abs() <= 1e-9 * b.area().max(1.0));
        }

        #[test]
        fn redistribution_keeps_top_entry(score in (1.0 / 31.0)..=1.0f64, class in 0usize..30) {
            let r = redistribute_labels(&LabelVector::one_hot(30, class, score).unwrap(), 30);
            prop_assert_eq!(r.argmax(), (class, score));
            let rest: Vec<f64> = (0..30).filter(|&i| i != class).map(|i| r.get(i)).collect();
            prop_assert!(rest.iter().all(|&v| v == rest[0]));
        }

        #[test]
        fn threshold_survivors_shrink_with_t(
            scores in proptest::collection::vec(0.0..=1.0f64, 0..30),
            t1 in 0.0..=1.0f64, t2 in 0.0..=1.0f64,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let dets: Vec<Detection> = scores.iter().enumerate()
                .map(|(i, &s)| det(bb(i as f64, 0.0, i as f64 + 1.0, 1.0), s))
                .collect();
            let a = threshold_filter(dets.clone(), lo);
            let b = threshold_filter(dets, hi);
            prop_assert!(b.iter().all(|d| a.contains(d)));
        }

        #[test]
        fn nms_keeps_an_antichain(
            boxes in proptest::collection::vec((0.0..50.0f64, 0.0..50.0f64, 1.0..20.0f64, 1.0..20.0f64, 0.0..=1.0f64), 0..25),
            thr in 0.05..=1.0f64,
        ) {
            let dets: Vec<Detection> = boxes.iter()
                .map(|&(x, y, w, h, s)| det(bb(x, y, x + w, y + h), s))
                .collect();
            let kept = final_nms(dets, thr);
            for i in 0..kept.len() {
                prop_assert!(i == 0 || kept[i - 1].raw_score() >= kept[i].raw_score());
                for j in 0..i {
                    prop_assert!(iou(kept[i].bbox(), kept[j].bbox()) < thr);
                }
            }
        }
    }
}
