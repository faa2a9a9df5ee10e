//! Probabilistic object detection toolkit.
//!
//! Fuses detections from an ensemble of detectors (or Monte Carlo dropout
//! passes), post-processes them into probabilistic boxes with Gaussian
//! corners, and scores them with PDQ, the probability-based detection quality.
//!
//! ```
//! use probdet::{evaluate_sequence, BoundingBox, Detection, Frame, GroundTruthObject, LabelVector, ProbabilisticBox};
//!
//! let b = BoundingBox::new(2.0, 2.0, 10.0, 8.0).unwrap();
//! let gt = GroundTruthObject::new(1, b, None).unwrap();
//! let det = Detection::new(ProbabilisticBox::crisp(b), LabelVector::one_hot(3, 1, 1.0).unwrap(), "model");
//! let frame = Frame::new(0, 16, 16, vec![det], vec![gt]).unwrap();
//! assert_eq!(evaluate_sequence(&[frame]).pdq_score, 1.0);
//! ```
//!
//! Frame- and grid-level loops run on rayon when the `parallel` feature is
//! enabled (the default); see [`Execution`].

pub mod assignment;
pub mod detection;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod heatmap;
pub mod heuristics;
pub mod io;
pub mod merge;
pub mod pdq;
pub mod report;
pub mod sweep;
pub mod synth;

pub use detection::{
    mask_of, CornerCovariance, Detection, DetectionFrame, Frame, GroundTruthObject, LabelVector, PixelMask,
    ProbabilisticBox, SourceFrame, SourceId, DEFAULT_NUM_CLASSES,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{iou, BoundingBox, Pixel, PixelRect};
pub use heatmap::{pixel_field, spatial_quality, PixelProbabilityField};
pub use heuristics::{run_pipeline, run_pipeline_with, PipelineConfig, Stage};
pub use merge::{merge_ensemble, MergeConfig, MergeStrategy};
pub use pdq::{evaluate_frame, evaluate_sequence, evaluate_sequence_with, EvalSummary, FrameEvaluation, PairQuality};
pub use sweep::{run_sweep, SweepGrid, SweepResult, SweepRow};
