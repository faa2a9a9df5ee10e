mod common;

use probdet::io::{self, build_frames, cache_detections, DetectionCache, DetectionSequence, GroundTruthSequence};
use probdet::merge::cluster;
use probdet::synth::{ensemble_benchmark, SceneParams};
use probdet::{
    evaluate_frame, evaluate_sequence, run_pipeline, run_sweep, Detection, Execution, Frame, GroundTruthObject,
    LabelVector, MergeStrategy, PipelineConfig, ProbabilisticBox, SweepGrid,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_frame(seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (40, 40);
    let gts: Vec<GroundTruthObject> = (0..rng.gen_range(0..5))
        .map(|_| {
            let b = common::random_box(&mut rng, w, h, 20.0);
            let mask = if rng.gen_bool(0.3) { common::random_mask(&mut rng, &b) } else { None };
            GroundTruthObject::new(rng.gen_range(0..3), b, mask).unwrap()
        })
        .collect();
    let dets = (0..rng.gen_range(0..5))
        .map(|_| common::random_detection(&mut rng, w, h, 3, "d"))
        .collect();
    Frame::new(seed, w, h, dets, gts).unwrap()
}

fn small_bench(seed: u64, frames: usize) -> probdet::synth::SyntheticBenchmark {
    let params = SceneParams {
        num_frames: frames,
        image_width: 40,
        image_height: 40,
        max_size: 16.0,
        num_classes: 5,
        ..SceneParams::default()
    };
    ensemble_benchmark(&params, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_false_positive_never_raises_pdq(seed in any::<u64>()) {
        let frame = random_frame(seed);
        let before = evaluate_sequence(std::slice::from_ref(&frame));
        // A box in a corner with a class no ground truth here uses.
        let fp = Detection::new(
            ProbabilisticBox::crisp(probdet::BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap()),
            LabelVector::new(vec![0.0, 0.0, 0.0, 0.9]).unwrap(),
            "fp",
        );
        let mut dets = frame.detections.clone();
        let relabeled: Vec<Detection> = dets.drain(..)
            .map(|d| {
                let mut p = d.labels().probs().to_vec();
                p.push(0.0);
                d.with_labels(LabelVector::new(p).unwrap())
            })
            .collect();
        let mut with_fp = relabeled.clone();
        with_fp.push(fp);
        let base = Frame::new(0, 40, 40, relabeled, frame.ground_truths.clone()).unwrap();
        let more = Frame::new(0, 40, 40, with_fp, frame.ground_truths.clone()).unwrap();
        let (a, b) = (evaluate_sequence(&[base]), evaluate_sequence(&[more]));
        prop_assert_eq!(a.pdq_score, before.pdq_score);
        prop_assert!(b.pdq_score <= a.pdq_score);
        prop_assert_eq!(b.total_fp, a.total_fp + 1);
    }

    #[test]
    fn counts_are_consistent(seed in any::<u64>()) {
        let frame = random_frame(seed);
        let e = evaluate_frame(&frame);
        prop_assert_eq!(e.true_positives + e.false_positives, frame.detections.len());
        prop_assert_eq!(e.true_positives + e.false_negatives, frame.ground_truths.len());
        prop_assert!(e.assignments.iter().all(|a| a.quality.ppdq > 0.0 && a.quality.ppdq <= 1.0));
        let s = evaluate_sequence(&[frame]);
        prop_assert!((0.0..=1.0).contains(&s.pdq_score));
    }

    #[test]
    fn without_detections_every_object_is_missed(seed in any::<u64>()) {
        let frame = random_frame(seed);
        prop_assume!(!frame.ground_truths.is_empty());
        let empty = Frame::new(0, 40, 40, vec![], frame.ground_truths.clone()).unwrap();
        let s = evaluate_sequence(&[empty]);
        prop_assert_eq!(s.total_fn, frame.ground_truths.len());
        prop_assert_eq!(s.pdq_score, 0.0);
    }

    #[test]
    fn clusters_partition_the_detections(seed in any::<u64>(), lambda in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dets: Vec<Detection> = (0..rng.gen_range(0..12))
            .map(|_| common::random_detection(&mut rng, 32, 32, 3, "d"))
            .collect();
        let groups = cluster(&dets, lambda);
        let mut seen: Vec<usize> = groups.iter().flat_map(|g| g.members().to_vec()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..dets.len()).collect::<Vec<_>>());
        for g in &groups {
            let leader = &dets[g.leader()];
            for &m in g.members() {
                prop_assert!(dets[m].raw_score() <= leader.raw_score());
                prop_assert!(probdet::iou(leader.bbox(), dets[m].bbox()) >= lambda);
            }
        }
    }

    #[test]
    fn lower_lambda_never_adds_groups(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anchors: Vec<probdet::BoundingBox> = (0..3).map(|_| common::random_box(&mut rng, 32, 32, 20.0)).collect();
        // Near-duplicates of a few anchors, so clusters are nested as lambda drops.
        let dets: Vec<Detection> = (0..rng.gen_range(1..10))
            .map(|i| {
                let a = anchors[i % anchors.len()];
                Detection::new(ProbabilisticBox::crisp(a), common::random_labels(&mut rng, 3), "d")
            })
            .collect();
        let counts: Vec<usize> = [0.9, 0.7, 0.5, 0.3, 0.1].iter().map(|&l| cluster(&dets, l).len()).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?}", counts);
    }

    #[test]
    fn sweep_rows_match_direct_runs(seed in 0u64..1000, ti in 0usize..3, si in 0usize..3) {
        let bench = small_bench(seed, 6);
        let frames = bench.source_frames().unwrap();
        let mut grid = SweepGrid::product(
            vec![0.05, 0.3, 0.6], vec![0.0, 0.1], vec![0.1, 0.3, 0.5], vec![0.3], MergeStrategy::ALL.to_vec(),
        );
        grid.base.num_classes = 5;
        let result = run_sweep(&frames, &bench.ground_truth, &grid, Execution::Sequential).unwrap();
        let idx = ((ti * 2 + 1) * 3 + si) * 3 + (seed as usize % 3);
        let row = &result.rows[idx];
        let dets = run_pipeline(&frames, &row.config).unwrap();
        let direct = evaluate_sequence(&build_frames(&dets, &bench.ground_truth, true).unwrap());
        prop_assert_eq!(direct, row.summary);
        let best = result.rows[result.best].summary.pdq_score;
        prop_assert!(result.rows.iter().all(|r| r.summary.pdq_score <= best));
    }
}

#[test]
fn cached_evaluation_equals_evaluation_from_sources() {
    let bench = small_bench(3, 20);
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<std::path::PathBuf> = bench
        .detectors
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let p = dir.path().join(format!("det-{i}.json"));
            io::save_detections(&p, seq).unwrap();
            p
        })
        .collect();
    let loaded: Vec<DetectionSequence> = paths.iter().map(|p| io::load_detections(p).unwrap().value).collect();
    assert_eq!(loaded, bench.detectors);

    let sources = io::group_sources(&loaded).unwrap();
    let cache_dir = dir.path().join("cache");
    cache_detections(&sources, 5, None, &cache_dir).unwrap();
    let cache = DetectionCache::open(&cache_dir).unwrap();
    assert_eq!(cache.frames, sources);
    assert_eq!(cache.source_ids, vec!["calibrated".to_string(), "noisy".to_string()]);

    let mut config = PipelineConfig::default();
    config.num_classes = 5;
    let eval = |frames: &[probdet::SourceFrame]| {
        let dets = run_pipeline(frames, &config).unwrap();
        evaluate_sequence(&build_frames(&dets, &bench.ground_truth, true).unwrap())
    };
    assert_eq!(eval(&cache.frames), eval(&bench.source_frames().unwrap()));
}

#[test]
fn ground_truth_round_trips_through_files() {
    let bench = small_bench(4, 10);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gt.json");
    io::save_ground_truth(&p, &bench.ground_truth).unwrap();
    let loaded: GroundTruthSequence = io::load_ground_truth(&p).unwrap().value;
    assert_eq!(loaded, bench.ground_truth);
    assert!(loaded.frames.iter().flat_map(|f| &f.objects).any(|o| o.mask().is_some()));
}

#[test]
fn execution_modes_agree() {
    let bench = small_bench(5, 30);
    let frames = bench.source_frames().unwrap();
    let mut config = PipelineConfig::default();
    config.num_classes = 5;
    let dets = run_pipeline(&frames, &config).unwrap();
    let built = build_frames(&dets, &bench.ground_truth, true).unwrap();
    let seq = probdet::evaluate_sequence_with(&built, Execution::Sequential);
    for mode in [Execution::Parallel, Execution::Threads(1), Execution::Threads(3)] {
        assert_eq!(probdet::evaluate_sequence_with(&built, mode), seq);
        assert_eq!(probdet::run_pipeline_with(&frames, &config, mode).unwrap(), dets);
    }
}
