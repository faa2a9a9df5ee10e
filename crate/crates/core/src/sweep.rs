//! Offline hyperparameter search over cached detections.
//!
//! Raw per-frame sources are cached once; every grid point then reruns only
//! the post-processing pipeline and the evaluator. Grid points are the unit of
//! parallel work. Rows come back in grid order whatever the worker count.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::detection::SourceFrame;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::heuristics::{run_pipeline_with, PipelineConfig};
use crate::io::{build_frames, DetectionCache, GroundTruthSequence};
use crate::merge::MergeStrategy;
use crate::pdq::{evaluate_sequence_with, EvalSummary};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Every combination; threshold varies slowest, strategy fastest.
    #[default]
    Product,
    /// One axis at a time, the rest held at `base`.
    Axes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub thresholds: Vec<f64>,
    pub box_ratios: Vec<f64>,
    pub covariance_scales: Vec<f64>,
    pub nms_ious: Vec<f64>,
    pub strategies: Vec<MergeStrategy>,
    /// Settings not covered by the lists above, and the center of an axis sweep.
    #[serde(default)]
    pub base: PipelineConfig,
    #[serde(default)]
    pub mode: GridMode,
}

type Setter<T> = fn(&mut PipelineConfig, T);

fn set_threshold(c: &mut PipelineConfig, v: f64) {
    c.confidence_threshold = v;
}
fn set_ratio(c: &mut PipelineConfig, v: f64) {
    c.box_reduction_ratio = v;
}
fn set_scale(c: &mut PipelineConfig, v: f64) {
    c.covariance_scale = v;
}
fn set_nms(c: &mut PipelineConfig, v: f64) {
    c.final_nms_iou = v;
}
fn set_strategy(c: &mut PipelineConfig, s: MergeStrategy) {
    c.merge.strategy = s;
}

impl SweepGrid {
    /// A product grid with the given axes around the default configuration.
    pub fn product(
        thresholds: Vec<f64>,
        box_ratios: Vec<f64>,
        covariance_scales: Vec<f64>,
        nms_ious: Vec<f64>,
        strategies: Vec<MergeStrategy>,
    ) -> Self {
        Self {
            thresholds,
            box_ratios,
            covariance_scales,
            nms_ious,
            strategies,
            base: PipelineConfig::default(),
            mode: GridMode::Product,
        }
    }

    /// Every list non-empty and every resulting configuration valid.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let axes: [(&str, &[f64], Setter<f64>); 4] = [
            ("thresholds", &self.thresholds, set_threshold),
            ("box_ratios", &self.box_ratios, set_ratio),
            ("covariance_scales", &self.covariance_scales, set_scale),
            ("nms_ious", &self.nms_ious, set_nms),
        ];
        for (name, values, set) in axes {
            if values.is_empty() {
                return Err(Error::InvalidConfig(format!("sweep axis `{name}` is empty")));
            }
            for &v in values {
                let mut c = self.base.clone();
                set(&mut c, v);
                c.validate()
                    .map_err(|e| Error::InvalidConfig(format!("sweep axis `{name}`: {e}")))?;
            }
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig("sweep axis `strategies` is empty".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        let dims = [
            self.thresholds.len(),
            self.box_ratios.len(),
            self.covariance_scales.len(),
            self.nms_ious.len(),
            self.strategies.len(),
        ];
        match self.mode {
            GridMode::Product => dims.iter().product(),
            GridMode::Axes => dims.iter().sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Configurations in grid order.
    pub fn points(&self) -> Vec<PipelineConfig> {
        let mut out = Vec::with_capacity(self.len());
        match self.mode {
            GridMode::Product => {
                for &t in &self.thresholds {
                    for &r in &self.box_ratios {
                        for &s in &self.covariance_scales {
                            for &n in &self.nms_ious {
                                for &m in &self.strategies {
                                    let mut c = self.base.clone();
                                    set_threshold(&mut c, t);
                                    set_ratio(&mut c, r);
                                    set_scale(&mut c, s);
                                    set_nms(&mut c, n);
                                    set_strategy(&mut c, m);
                                    out.push(c);
                                }
                            }
                        }
                    }
                }
            }
            GridMode::Axes => {
                let axes: [(&[f64], Setter<f64>); 4] = [
                    (&self.thresholds, set_threshold),
                    (&self.box_ratios, set_ratio),
                    (&self.covariance_scales, set_scale),
                    (&self.nms_ious, set_nms),
                ];
                for (values, set) in axes {
                    for &v in values {
                        let mut c = self.base.clone();
                        set(&mut c, v);
                        out.push(c);
                    }
                }
                for &m in &self.strategies {
                    let mut c = self.base.clone();
                    set_strategy(&mut c, m);
                    out.push(c);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: PipelineConfig,
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// First row with the highest PDQ.
    pub best: usize,
}

impl SweepResult {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }
}

/// Pipeline plus evaluation for one configuration, single-threaded.
pub fn evaluate_config(frames: &[SourceFrame], gt: &GroundTruthSequence, config: &PipelineConfig) -> Result<EvalSummary> {
    let dets = run_pipeline_with(frames, config, Execution::Sequential)?;
    let frames = build_frames(&dets, gt, true)?;
    Ok(evaluate_sequence_with(&frames, Execution::Sequential))
}

fn check_frame_ids(frames: &[SourceFrame], gt: &GroundTruthSequence) -> Result<()> {
    let have: BTreeSet<u64> = frames.iter().map(|f| f.frame_id).collect();
    let want: BTreeSet<u64> = gt.frames.iter().map(|f| f.frame_id).collect();
    if have.len() != frames.len() {
        return Err(Error::FrameMismatch("cached frames repeat a frame id".into()));
    }
    if let Some(id) = want.difference(&have).next() {
        return Err(Error::FrameMismatch(format!("frame {id} is in the ground truth but not the cache")));
    }
    if let Some(id) = have.difference(&want).next() {
        return Err(Error::FrameMismatch(format!("frame {id} is in the cache but not the ground truth")));
    }
    Ok(())
}

/// Evaluates every grid point. Frame ids are checked before any work starts.
pub fn run_sweep(frames: &[SourceFrame], gt: &GroundTruthSequence, grid: &SweepGrid, exec: Execution) -> Result<SweepResult> {
    grid.validate()?;
    check_frame_ids(frames, gt)?;
    let points = grid.points();
    let summaries = exec.try_map(&points, |c| evaluate_config(frames, gt, c))?;
    let rows: Vec<SweepRow> = points
        .into_iter()
        .zip(summaries)
        .map(|(config, summary)| SweepRow { config, summary })
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.summary.pdq_score > rows[best].summary.pdq_score {
            best = i;
        }
    }
    Ok(SweepResult { rows, best })
}

pub fn run_sweep_cached(cache: &DetectionCache, gt: &GroundTruthSequence, grid: &SweepGrid, exec: Execution) -> Result<SweepResult> {
    run_sweep(&cache.frames, gt, grid, exec)
}
