//! Detector equivalences and ordering properties on random configurations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqdrift_core::calibration::ThresholdSchedule;
use seqdrift_core::detector::{run_summaries, DetectorConfig, UpdateMode};
use seqdrift_core::statistics::{Kernel, ReferenceSet};
use seqdrift_core::streams::{ChangePointModel, DistributionSpec};
use seqdrift_core::summaries::{Summary, SummaryStatistic};
use seqdrift_core::{StatisticKind, StreamSeed};

fn stream(model: &ChangePointModel<f64>, seed: u64, len: usize) -> Vec<Summary<f64>> {
    model.iter(StreamSeed::new(seed, 1)).take(len).collect()
}

fn random_schedule(rng: &mut ChaCha8Rng, w: usize, lo: f64, hi: f64) -> ThresholdSchedule<f64> {
    if rng.random_bool(0.5) {
        ThresholdSchedule::fixed(rng.random_range(lo..hi), w).unwrap()
    } else {
        let len = rng.random_range(1..200);
        let values = (0..len).map(|_| rng.random_range(lo..hi)).collect();
        ThresholdSchedule::time_varying(values, w, None).unwrap()
    }
}

/// A random detector plus a stream with a change somewhere in it.
fn random_case(rng: &mut ChaCha8Rng, case: usize) -> (DetectorConfig<f64>, Vec<Summary<f64>>, u64) {
    let kind = [StatisticKind::Ks, StatisticKind::MeanDiff, StatisticKind::Mmd2U][case % 3];
    let (n_max, w_max, cap_max) = match kind {
        StatisticKind::Mmd2U => (60, 40, 600),
        _ => (200, 200, 2000),
    };
    let n = rng.random_range(2..=n_max);
    let w = rng.random_range(2..=w_max);
    let cap = rng.random_range(w as u64..=cap_max);
    let dim = if kind == StatisticKind::Mmd2U { rng.random_range(1..=2) } else { 1 };
    let p = DistributionSpec::Gaussian { mean: vec![0.0; dim], var: vec![1.0; dim] };
    let q = DistributionSpec::Gaussian { mean: vec![-rng.random_range(0.0..1.5); dim], var: vec![1.0; dim] };
    let tau = rng.random_range(1..=cap);
    let model = ChangePointModel::new(p.clone(), q, Some(tau)).unwrap();
    let seed = rng.random();
    let reference: Vec<Summary<f64>> = ChangePointModel::stationary(p).unwrap().iter(StreamSeed::new(seed, 7)).take(n).collect();
    let reference = Arc::new(ReferenceSet::new(reference).unwrap());
    let (schedule, kernel) = match kind {
        StatisticKind::Ks => (random_schedule(rng, w, 0.1, 0.7), None),
        StatisticKind::MeanDiff => (random_schedule(rng, w, 0.1, 1.2), None),
        StatisticKind::Mmd2U => {
            let bw = reference.median_heuristic().unwrap_or(1.0);
            (random_schedule(rng, w, 0.0, 0.4), Some(Kernel::rbf(bw).unwrap()))
        }
    };
    let summary = SummaryStatistic::identity(dim).unwrap();
    let config = DetectorConfig::new(summary, kind, kernel, w, schedule, reference).unwrap();
    // small refresh interval exercises the periodic rebuild too
    let config = config.with_refresh_every(rng.random_range(50..5000));
    (config, stream(&model, seed, cap as usize), cap)
}

#[test]
fn incremental_and_recompute_agree_on_100_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xdec0de);
    let mut detections = 0;
    for case in 0..100 {
        let (config, xs, cap) = random_case(&mut rng, case);
        let fast = run_summaries(&config, xs.iter().cloned(), cap, false).unwrap();
        let slow_cfg = config.clone().with_mode(UpdateMode::Recompute);
        let slow = run_summaries(&slow_cfg, xs.iter().cloned(), cap, false).unwrap();
        assert_eq!(fast.detection_time, slow.detection_time, "case {case} ({:?})", config.statistic());
        assert_eq!(fast.steps, slow.steps, "case {case}");
        detections += usize::from(fast.detection_time.is_some());
    }
    // the comparison is only meaningful if both outcomes occur
    assert!((10..=95).contains(&detections), "{detections} detections");
}

#[test]
fn larger_thresholds_never_detect_earlier() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let null = ChangePointModel::stationary(DistributionSpec::standard_normal()).unwrap();
    let reference: Vec<f64> = stream(&null, 5, 300).iter().map(Summary::first).collect();
    let reference = Arc::new(ReferenceSet::from_scalars(&reference).unwrap());
    for case in 0..200 {
        let w = rng.random_range(5..80);
        let len = rng.random_range(1..150);
        let low: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..0.5)).collect();
        let high: Vec<f64> = low.iter().map(|h| h + rng.random_range(0.0..0.1)).collect();
        let low = ThresholdSchedule::time_varying(low, w, None).unwrap();
        let high = ThresholdSchedule::time_varying(high, w, None).unwrap();
        assert!(high.dominates(&low, 2000));
        let xs = stream(&null, 1000 + case, 2000);
        let run = |s: ThresholdSchedule<f64>| {
            let cfg = DetectorConfig::scalar(StatisticKind::Ks, None, w, s, reference.clone()).unwrap();
            run_summaries(&cfg, xs.iter().cloned(), 2000, false).unwrap().run_length()
        };
        assert!(run(high) >= run(low), "case {case}");
    }
}

#[test]
fn warm_up_steps_never_detect() {
    let reference = Arc::new(ReferenceSet::from_scalars(&[0.0, 1.0, 2.0, 3.0]).unwrap());
    for w in [1, 2, 7, 30] {
        for kind in [StatisticKind::Ks, StatisticKind::MeanDiff, StatisticKind::Mmd2U] {
            let kernel = (kind == StatisticKind::Mmd2U).then(|| Kernel::rbf(1.0).unwrap());
            if kind == StatisticKind::Mmd2U && w < 2 {
                continue;
            }
            let schedule = ThresholdSchedule::fixed(f64::NEG_INFINITY, w).unwrap();
            let cfg = DetectorConfig::scalar(kind, kernel, w, schedule, reference.clone()).unwrap();
            let xs = (0..100).map(|i| Summary::scalar(i as f64 * 10.0).unwrap());
            let res = run_summaries(&cfg, xs, 100, true).unwrap();
            assert_eq!(res.detection_time, Some(w as u64));
            let trace = res.trace.unwrap();
            assert!(trace[..w - 1].iter().all(|r| !r.detected && r.statistic.is_none() && r.threshold.is_none()));
        }
    }
}
