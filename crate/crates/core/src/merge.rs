//! Fusion of detections from several detectors or dropout passes.
//!
//! Detections are concatenated, grouped into observations by greedy IoU
//! absorption around the most confident remaining detection, and each
//! observation is reduced to one (or, for `AverageSameLabel`, one per label)
//! detection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::{CornerCovariance, Detection, LabelVector, ProbabilisticBox};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    /// Keep the highest-scoring member verbatim.
    MostConfident,
    /// Unweighted mean of corners, covariances and label vectors.
    Average,
    /// `Average` within each predicted-class subgroup.
    AverageSameLabel,
}

impl MergeStrategy {
    pub const ALL: [MergeStrategy; 3] = [
        MergeStrategy::MostConfident,
        MergeStrategy::Average,
        MergeStrategy::AverageSameLabel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MergeStrategy::MostConfident => "most_confident",
            MergeStrategy::Average => "average",
            MergeStrategy::AverageSameLabel => "average_same_label",
        }
    }
}

impl fmt::Display for MergeStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MergeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MergeStrategy::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown merge strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeConfig {
    pub lambda_iou: f64,
    pub strategy: MergeStrategy,
    /// When set, sources named `<detector>/<pass>` are first fused per detector
    /// with this strategy, then across detectors with `strategy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_premerge: Option<MergeStrategy>,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            lambda_iou: 0.5,
            strategy: MergeStrategy::MostConfident,
            dropout_premerge: None,
        }
    }
}

impl MergeConfig {
    pub fn new(lambda_iou: f64, strategy: MergeStrategy) -> Result<Self> {
        let cfg = Self {
            lambda_iou,
            strategy,
            dropout_premerge: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_iou) {
            return Err(Error::InvalidConfig(format!(
                "lambda_iou = {} outside [0, 1]",
                self.lambda_iou
            )));
        }
        Ok(())
    }
}

/// Indices into the concatenated detection list, highest score first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationGroup {
    member_indices: Vec<usize>,
}

impl ObservationGroup {
    pub fn members(&self) -> &[usize] {
        &self.member_indices
    }

    pub fn leader(&self) -> usize {
        self.member_indices[0]
    }

    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }
}

/// Concatenates sources in order, checking that all label vectors have the same length.
pub fn concat_detections(sources: &[Vec<Detection>]) -> Result<Vec<Detection>> {
    let mut k = None;
    for det in sources.iter().flatten() {
        let len = det.labels().len();
        match k {
            None => k = Some(len),
            Some(expected) if expected != len => {
                return Err(Error::LabelLengthMismatch {
                    expected,
                    found: len,
                })
            }
            _ => {}
        }
    }
    Ok(sources.iter().flatten().cloned().collect())
}

/// Indices sorted by descending raw score; ties keep input order.
pub(crate) fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].raw_score().total_cmp(&dets[a].raw_score()));
    order
}

/// Greedy seed-relative grouping: the best unclustered detection absorbs every
/// unclustered detection with IoU >= `lambda_iou` against it.
pub fn cluster(dets: &[Detection], lambda_iou: f64) -> Vec<ObservationGroup> {
    let order = score_order(dets);
    let mut taken = vec![false; dets.len()];
    let mut groups = Vec::new();
    for (pos, &seed) in order.iter().enumerate() {
        if taken[seed] {
            continue;
        }
        taken[seed] = true;
        let mut members = vec![seed];
        for &other in &order[pos + 1..] {
            if !taken[other] && iou(dets[seed].bbox(), dets[other].bbox()) >= lambda_iou {
                taken[other] = true;
                members.push(other);
            }
        }
        groups.push(ObservationGroup {
            member_indices: members,
        });
    }
    groups
}

fn average(members: &[&Detection]) -> Detection {
    let n = members.len() as f64;
    let mut c = [0.0f64; 4];
    for d in members {
        for (acc, v) in c.iter_mut().zip(d.bbox().corners()) {
            *acc += v;
        }
    }
    let bbox = BoundingBox::new(c[0] / n, c[1] / n, c[2] / n, c[3] / n)
        .expect("the mean of ordered corners stays ordered");
    let tl = CornerCovariance::mean_of(members.iter().map(|d| d.pbox().cov_top_left()));
    let br = CornerCovariance::mean_of(members.iter().map(|d| d.pbox().cov_bottom_right()));
    let pbox = ProbabilisticBox::new(bbox, tl, br).expect("means of diagonal covariances are diagonal");
    let labels = LabelVector::mean_of(members.iter().map(|d| d.labels()));
    Detection::new(pbox, labels, members[0].source_id().clone())
}

/// Reduces one observation. Averaged detections inherit the leader's source id.
pub fn merge_group(group: &ObservationGroup, dets: &[Detection], strategy: MergeStrategy) -> Vec<Detection> {
    let members: Vec<&Detection> = group.members().iter().map(|&i| &dets[i]).collect();
    if members.len() == 1 {
        return vec![members[0].clone()];
    }
    match strategy {
        MergeStrategy::MostConfident => vec![members[0].clone()],
        MergeStrategy::Average => vec![average(&members)],
        MergeStrategy::AverageSameLabel => {
            // subgroups in order of their best member
            let mut subgroups: Vec<(usize, Vec<&Detection>)> = Vec::new();
            for d in members {
                let class = d.predicted_class();
                match subgroups.iter_mut().find(|(c, _)| *c == class) {
                    Some((_, list)) => list.push(d),
                    None => subgroups.push((class, vec![d])),
                }
            }
            subgroups.iter().map(|(_, list)| average(list)).collect()
        }
    }
}

fn merge_flat(dets: &[Detection], lambda_iou: f64, strategy: MergeStrategy) -> Vec<Detection> {
    let mut out: Vec<Detection> = cluster(dets, lambda_iou)
        .iter()
        .flat_map(|g| merge_group(g, dets, strategy))
        .collect();
    out.sort_by(|a, b| b.raw_score().total_cmp(&a.raw_score()));
    out
}

fn detector_of(source: &str) -> &str {
    source.split_once('/').map_or(source, |(d, _)| d)
}

/// Concatenate, cluster and merge; output sorted by descending raw score.
pub fn merge_ensemble(sources: &[Vec<Detection>], config: &MergeConfig) -> Result<Vec<Detection>> {
    config.validate()?;
    let Some(pass_strategy) = config.dropout_premerge else {
        let all = concat_detections(sources)?;
        return Ok(merge_flat(&all, config.lambda_iou, config.strategy));
    };

    let all = concat_detections(sources)?;
    let mut detectors: Vec<(&str, Vec<Detection>)> = Vec::new();
    for det in &all {
        let name = detector_of(det.source_id());
        match detectors.iter_mut().find(|(d, _)| *d == name) {
            Some((_, list)) => list.push(det.clone()),
            None => detectors.push((name, vec![det.clone()])),
        }
    }
    let fused: Vec<Detection> = detectors
        .iter()
        .flat_map(|(_, list)| merge_flat(list, config.lambda_iou, pass_strategy))
        .collect();
    Ok(merge_flat(&fused, config.lambda_iou, config.strategy))
}
