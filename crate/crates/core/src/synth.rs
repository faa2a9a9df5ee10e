//! Seeded synthetic scenes and simulated detectors.
//!
//! Used for benchmarks, sweeps and fixtures when real detector output is not
//! at hand. Everything is driven by a ChaCha RNG, so a seed fully determines
//! the output on every platform.
//!
//! Each simulated detector sees the same ground truth. Box errors have a part
//! shared by all detectors (the object is ambiguous for everyone) plus a part
//! of their own.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionFrame, GroundTruthObject, LabelVector, PixelMask, ProbabilisticBox, SourceFrame};
use crate::error::Result;
use crate::geometry::{BoundingBox, Pixel};
use crate::io::{group_sources, DetectionSequence, GroundTruthFrame, GroundTruthSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub num_frames: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub num_classes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Object side lengths are drawn from `[min_size, max_size]` pixels.
    pub min_size: f64,
    pub max_size: f64,
    /// Probability that an object carries an elliptical mask instead of its box.
    pub mask_rate: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            num_frames: 100,
            image_width: 64,
            image_height: 64,
            num_classes: 30,
            min_objects: 1,
            max_objects: 4,
            min_size: 6.0,
            max_size: 30.0,
            mask_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub name: String,
    /// Own corner jitter, as a fraction of the object size.
    pub box_noise: f64,
    pub miss_rate: f64,
    /// Mean and spread of the probability put on the true class.
    pub confidence: f64,
    pub confidence_spread: f64,
    /// Chance that the top class is wrong.
    pub confusion_rate: f64,
    /// Expected false positives per frame.
    pub false_positives: f64,
    /// Mean top score of a false positive.
    pub fp_confidence: f64,
}

impl DetectorModel {
    /// Tight boxes and confident, mostly right labels.
    pub fn calibrated(name: &str) -> Self {
        Self {
            name: name.to_string(),
            box_noise: 0.03,
            miss_rate: 0.1,
            confidence: 0.85,
            confidence_spread: 0.08,
            confusion_rate: 0.05,
            false_positives: 0.5,
            fp_confidence: 0.3,
        }
    }

    /// Looser boxes and hedged labels.
    pub fn noisy(name: &str) -> Self {
        Self {
            name: name.to_string(),
            box_noise: 0.12,
            miss_rate: 0.15,
            confidence: 0.45,
            confidence_spread: 0.15,
            confusion_rate: 0.2,
            false_positives: 1.0,
            fp_confidence: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    pub ground_truth: GroundTruthSequence,
    pub detectors: Vec<DetectionSequence>,
}

impl SyntheticBenchmark {
    pub fn source_frames(&self) -> Result<Vec<SourceFrame>> {
        group_sources(&self.detectors)
    }
}

/// Fraction of object size shared by all detectors' corner errors.
const SHARED_NOISE: f64 = 0.04;

fn uniform_box(rng: &mut ChaCha8Rng, p: &SceneParams) -> BoundingBox {
    let (w, h) = (p.image_width as f64, p.image_height as f64);
    let bw = rng.gen_range(p.min_size..=p.max_size).min(w);
    let bh = rng.gen_range(p.min_size..=p.max_size).min(h);
    let x1 = rng.gen_range(0.0..=(w - bw));
    let y1 = rng.gen_range(0.0..=(h - bh));
    BoundingBox::new(x1.round(), y1.round(), (x1 + bw).round().min(w), (y1 + bh).round().min(h))
        .expect("ordered corners")
}

fn ellipse_mask(b: &BoundingBox) -> Option<PixelMask> {
    let (cx, cy) = b.center();
    let (rx, ry) = (b.width() / 2.0, b.height() / 2.0);
    let px: Vec<Pixel> = b
        .pixel_rect()
        .pixels()
        .filter(|p| {
            let dx = (p.x as f64 + 0.5 - cx) / rx;
            let dy = (p.y as f64 + 0.5 - cy) / ry;
            dx * dx + dy * dy <= 1.0
        })
        .collect();
    (!px.is_empty()).then(|| PixelMask::new(px))
}

pub fn generate_ground_truth(params: &SceneParams, rng: &mut ChaCha8Rng) -> GroundTruthSequence {
    let frames = (0..params.num_frames)
        .map(|i| {
            let n = rng.gen_range(params.min_objects..=params.max_objects);
            let objects = (0..n)
                .map(|_| {
                    let b = uniform_box(rng, params);
                    let class = rng.gen_range(0..params.num_classes);
                    let mask = if rng.gen_bool(params.mask_rate) { ellipse_mask(&b) } else { None };
                    GroundTruthObject::new(class, b, mask).expect("mask lies inside its box")
                })
                .collect();
            GroundTruthFrame {
                frame_id: i as u64,
                image_width: params.image_width,
                image_height: params.image_height,
                objects,
            }
        })
        .collect();
    GroundTruthSequence {
        class_names: (0..params.num_classes).map(|c| format!("class-{c:02}")).collect(),
        frames,
    }
}

fn labels(rng: &mut ChaCha8Rng, k: usize, top: usize, mean: f64, spread: f64) -> LabelVector {
    let p = Normal::new(mean, spread.max(1e-9))
        .expect("finite spread")
        .sample(rng)
        .clamp(0.05, 0.99);
    let mut probs = vec![0.0; k];
    probs[top] = p;
    // Part of the remainder goes to one runner-up class.
    let runner = (top + rng.gen_range(1..k)) % k;
    probs[runner] = ((1.0 - p) * rng.gen_range(0.2..0.8)).min(p);
    LabelVector::new(probs).expect("probabilities sum below one")
}

fn jitter_box(b: &BoundingBox, shared: [f64; 4], own: f64, rng: &mut ChaCha8Rng, w: u32, h: u32) -> BoundingBox {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let (sx, sy) = (b.width(), b.height());
    let scale = [sx, sy, sx, sy];
    let mut c = b.corners();
    for i in 0..4 {
        c[i] += (shared[i] + own * n.sample(rng)) * scale[i];
    }
    let (x1, x2) = (c[0].min(c[2]), c[0].max(c[2]));
    let (y1, y2) = (c[1].min(c[3]), c[1].max(c[3]));
    let out = BoundingBox::new(x1, y1, x2.max(x1 + 1.0), y2.max(y1 + 1.0))
        .expect("ordered corners")
        .clamp_to(w, h);
    if out.area() > 0.0 {
        out
    } else {
        *b
    }
}

/// Ground truth plus one detection sequence per model, all from `seed`.
pub fn generate_benchmark(params: &SceneParams, models: &[DetectorModel], seed: u64) -> SyntheticBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt = generate_ground_truth(params, &mut rng);
    let n = Normal::new(0.0, SHARED_NOISE).expect("finite spread");
    let shared: Vec<Vec<[f64; 4]>> = gt
        .frames
        .iter()
        .map(|f| {
            f.objects
                .iter()
                .map(|_| [n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)])
                .collect()
        })
        .collect();
    let k = params.num_classes;
    let detectors = models
        .iter()
        .map(|m| {
            let frames = gt
                .frames
                .iter()
                .zip(&shared)
                .map(|(f, shared)| {
                    let (w, h) = (f.image_width, f.image_height);
                    let mut dets = Vec::new();
                    for (o, s) in f.objects.iter().zip(shared) {
                        if rng.gen_bool(m.miss_rate) {
                            continue;
                        }
                        let b = jitter_box(o.bbox(), *s, m.box_noise, &mut rng, w, h);
                        let top = if rng.gen_bool(m.confusion_rate) {
                            (o.class_id() + rng.gen_range(1..k)) % k
                        } else {
                            o.class_id()
                        };
                        let l = labels(&mut rng, k, top, m.confidence, m.confidence_spread);
                        dets.push(Detection::new(ProbabilisticBox::crisp(b), l, m.name.as_str()));
                    }
                    let fps = (m.false_positives * 2.0 * rng.gen::<f64>()).round() as usize;
                    for _ in 0..fps {
                        let b = uniform_box(&mut rng, params);
                        let top = rng.gen_range(0..k);
                        let l = labels(&mut rng, k, top, m.fp_confidence, 0.1);
                        dets.push(Detection::new(ProbabilisticBox::crisp(b), l, m.name.as_str()));
                    }
                    dets.shuffle(&mut rng);
                    DetectionFrame {
                        frame_id: f.frame_id,
                        image_width: w,
                        image_height: h,
                        detections: dets,
                    }
                })
                .collect();
            DetectionSequence {
                num_classes: k,
                class_names: Some(gt.class_names.clone()),
                frames,
            }
        })
        .collect();
    SyntheticBenchmark {
        ground_truth: gt,
        detectors,
    }
}

/// The two-detector ensemble: one calibrated, one noisy.
pub fn ensemble_benchmark(params: &SceneParams, seed: u64) -> SyntheticBenchmark {
    generate_benchmark(
        params,
        &[DetectorModel::calibrated("calibrated"), DetectorModel::noisy("noisy")],
        seed,
    )
}
