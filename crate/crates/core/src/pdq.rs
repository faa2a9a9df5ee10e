//! Pairwise and sequence-level probability-based detection quality.

use serde::Serialize;

use crate::assignment::{max_weight_matching, WeightMatrix};
use crate::detection::{Detection, Frame, GroundTruthObject};
use crate::exec::Execution;
use crate::heatmap::{pixel_field, spatial_quality, PixelProbabilityField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairQuality {
    pub spatial_q: f64,
    pub label_q: f64,
    pub ppdq: f64,
}

impl PairQuality {
    pub const ZERO: PairQuality = PairQuality {
        spatial_q: 0.0,
        label_q: 0.0,
        ppdq: 0.0,
    };

    /// Geometric mean of the two qualities.
    pub fn new(spatial_q: f64, label_q: f64) -> Self {
        Self {
            spatial_q,
            label_q,
            ppdq: (spatial_q * label_q).sqrt(),
        }
    }
}

/// Probability the detection assigns to the ground-truth class.
pub fn label_quality(gt: &GroundTruthObject, det: &Detection) -> f64 {
    det.labels().get(gt.class_id())
}

/// Degenerate ground truth (no box pixels) or a zero-area detection box give all zeros.
pub fn pair_quality(
    gt: &GroundTruthObject,
    det: &Detection,
    image_w: u32,
    image_h: u32,
) -> PairQuality {
    if det.bbox().area() <= 0.0 || gt.box_pixel_count() == 0 {
        return PairQuality::ZERO;
    }
    let field = pixel_field(det.pbox(), image_w, image_h);
    quality_with_field(gt, det, &field)
}

fn quality_with_field(gt: &GroundTruthObject, det: &Detection, field: &PixelProbabilityField) -> PairQuality {
    let label_q = label_quality(gt, det);
    if label_q <= 0.0 {
        return PairQuality::ZERO;
    }
    let spatial_q = spatial_quality(gt, field);
    if spatial_q <= 0.0 {
        return PairQuality::ZERO;
    }
    PairQuality::new(spatial_q, label_q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assignment {
    pub gt_index: usize,
    pub det_index: usize,
    pub quality: PairQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameEvaluation {
    pub frame_id: u64,
    /// True-positive pairs, sorted by ground-truth index.
    pub assignments: Vec<Assignment>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `1 - max label probability` of every false positive, in detection order.
    pub fp_label_qualities: Vec<f64>,
}

/// Dense pPDQ matrix of a frame, ground truths as rows.
pub fn quality_matrix(frame: &Frame) -> Vec<Vec<PairQuality>> {
    let mut fields: Vec<Option<PixelProbabilityField>> = vec![None; frame.detections.len()];
    frame
        .ground_truths
        .iter()
        .map(|gt| {
            frame
                .detections
                .iter()
                .enumerate()
                .map(|(j, det)| {
                    if det.bbox().area() <= 0.0
                        || gt.box_pixel_count() == 0
                        || label_quality(gt, det) <= 0.0
                    {
                        return PairQuality::ZERO;
                    }
                    let field = fields[j].get_or_insert_with(|| {
                        pixel_field(det.pbox(), frame.image_width, frame.image_height)
                    });
                    quality_with_field(gt, det, field)
                })
                .collect()
        })
        .collect()
}

/// Matches detections to ground truth by maximum total pPDQ and counts TP/FP/FN.
///
/// Zero-quality pairs never count as matches; both sides stay unassigned.
pub fn evaluate_frame(frame: &Frame) -> FrameEvaluation {
    let (n_gt, n_det) = (frame.ground_truths.len(), frame.detections.len());
    let qualities = quality_matrix(frame);
    let weights = WeightMatrix::from_fn(n_gt, n_det, |i, j| qualities[i][j].ppdq);
    let pairs = max_weight_matching(&weights);

    let mut det_matched = vec![false; n_det];
    let assignments: Vec<Assignment> = pairs
        .iter()
        .map(|&(i, j)| {
            det_matched[j] = true;
            Assignment {
                gt_index: i,
                det_index: j,
                quality: qualities[i][j],
            }
        })
        .collect();
    let fp_label_qualities = frame
        .detections
        .iter()
        .zip(&det_matched)
        .filter(|(_, &m)| !m)
        .map(|(d, _)| 1.0 - d.raw_score())
        .collect::<Vec<_>>();

    let tp = assignments.len();
    FrameEvaluation {
        frame_id: frame.frame_id,
        assignments,
        true_positives: tp,
        false_positives: n_det - tp,
        false_negatives: n_gt - tp,
        fp_label_qualities,
    }
}

/// Sequence-level scores; the `avg_*` qualities are means over true positives,
/// except `avg_fp_quality` which is the mean of `1 - max label` over false positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSummary {
    pub pdq_score: f64,
    pub avg_ppdq: f64,
    pub avg_spatial_q: f64,
    pub avg_label_q: f64,
    pub avg_fp_quality: f64,
    pub total_tp: usize,
    pub total_fp: usize,
    pub total_fn: usize,
}

impl EvalSummary {
    pub const EMPTY: EvalSummary = EvalSummary {
        pdq_score: 0.0,
        avg_ppdq: 0.0,
        avg_spatial_q: 0.0,
        avg_label_q: 0.0,
        avg_fp_quality: 0.0,
        total_tp: 0,
        total_fp: 0,
        total_fn: 0,
    };
}

/// Reduces frame evaluations in the given order (the summation order is fixed).
pub fn summarize(evals: &[FrameEvaluation]) -> EvalSummary {
    let (mut ppdq, mut sq, mut lq, mut fpq) = (0.0, 0.0, 0.0, 0.0);
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for e in evals {
        for a in &e.assignments {
            ppdq += a.quality.ppdq;
            sq += a.quality.spatial_q;
            lq += a.quality.label_q;
        }
        fpq += e.fp_label_qualities.iter().sum::<f64>();
        tp += e.true_positives;
        fp += e.false_positives;
        fn_ += e.false_negatives;
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let denom = tp + fp + fn_;
    EvalSummary {
        pdq_score: mean(ppdq, denom),
        avg_ppdq: mean(ppdq, tp),
        avg_spatial_q: mean(sq, tp),
        avg_label_q: mean(lq, tp),
        avg_fp_quality: mean(fpq, fp),
        total_tp: tp,
        total_fp: fp,
        total_fn: fn_,
    }
}

pub fn evaluate_sequence(frames: &[Frame]) -> EvalSummary {
    evaluate_sequence_with(frames, Execution::default())
}

pub fn evaluate_sequence_with(frames: &[Frame], exec: Execution) -> EvalSummary {
    summarize(&exec.map(frames, evaluate_frame))
}
