//! Two-sample statistics against brute-force double-loop oracles.

use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqdrift_core::statistics::{
    self, ks_scaled_sorted, Kernel, KsTracker, MmdSums, ReferenceSet, SlidingWindow,
};
use seqdrift_core::summaries::Summary;

mod common;
use common::{ks_oracle, mmd_oracle, points, random_values, rel_err};

fn window_of(values: &[f64]) -> SlidingWindow<f64> {
    let mut w = SlidingWindow::new(values.len()).unwrap();
    for &v in values {
        w.push(Summary::scalar(v).unwrap(), None).unwrap();
    }
    w
}

#[test]
fn ks_matches_exact_oracle_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for case in 0..500 {
        let n = rng.random_range(2..=50);
        let m = rng.random_range(1..=50);
        let tied = case % 2 == 0;
        let r = random_values(&mut rng, n, tied);
        let y = random_values(&mut rng, m, tied);
        let want = ks_oracle(&r, &y);

        let reference = ReferenceSet::from_scalars(&r).unwrap();
        let got = statistics::ks_distance(&reference, &window_of(&y)).unwrap().value;
        assert_eq!(got, *want.numer() as f64 / *want.denom() as f64, "case {case}");

        let mut ys = y.clone();
        ys.sort_by(f64::total_cmp);
        let scaled = ks_scaled_sorted(reference.sorted_values().unwrap(), &ys);
        assert_eq!(Ratio::new(scaled.numerator as i64, scaled.denominator() as i64), want, "case {case}");

        let mut tracker = KsTracker::new(reference.sorted_values().unwrap(), m);
        for &v in &y {
            tracker.insert(v);
        }
        assert_eq!(tracker.scaled().numerator, scaled.numerator, "tracker, case {case}");
    }
}

#[test]
fn ks_tracker_matches_oracle_while_sliding() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = random_values(&mut rng, 40, true);
    let reference = ReferenceSet::from_scalars(&r).unwrap();
    let w = 12;
    let mut tracker = KsTracker::new(reference.sorted_values().unwrap(), w);
    let stream: Vec<f64> = (0..2000).map(|i| rng.random_range(0..8) as f64 + if i > 1000 { 0.5 } else { 0.0 }).collect();
    for t in 0..stream.len() {
        if t >= w {
            assert!(tracker.remove(stream[t - w]));
        }
        tracker.insert(stream[t]);
        if t + 1 >= w {
            let want = ks_oracle(&r, &stream[t + 1 - w..=t]);
            assert_eq!(Ratio::new(tracker.scaled().numerator as i64, (40 * w) as i64), want, "t={t}");
        }
    }
}

#[test]
fn mmd_matches_oracle_on_500_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xabc);
    for case in 0..500 {
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(2..=30);
        let m = rng.random_range(2..=30);
        let x = points(&mut rng, n, dim, 0.0);
        let y = points(&mut rng, m, dim, if case % 3 == 0 { 0.7 } else { 0.0 });
        let kernel = match case % 3 {
            0 => Kernel::rbf(rng.random_range(0.2..2.0)).unwrap(),
            1 => Kernel::Linear,
            _ => Kernel::rbf(1.0).unwrap(),
        };
        let reference = ReferenceSet::new(x.clone()).unwrap();
        let got = statistics::mmd::mmd2_u(&reference, &y, &kernel).unwrap();
        let want = mmd_oracle(&x, &y, &kernel);
        // values that cancel to ~0 are compared on an absolute scale
        assert!(rel_err(got, want) < 1e-9 || (got - want).abs() < 1e-12, "case {case}: {got} vs {want}");
    }
}

#[test]
fn incremental_mmd_tracks_recomputation_over_ten_thousand_slides() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let reference = ReferenceSet::new(points(&mut rng, 60, 2, 0.0)).unwrap();
    let kernel = Kernel::rbf(reference.median_heuristic().unwrap()).unwrap();
    let reference = reference.with_kernel(kernel).unwrap();
    // never refresh, so all agreement comes from the incremental updates
    let mut window = SlidingWindow::new(25).unwrap().with_refresh_every(usize::MAX);
    let mut worst: f64 = 0.0;
    for step in 0..10_000 {
        let shift = if step > 5_000 { 0.8 } else { 0.0 };
        let p = points(&mut rng, 1, 2, shift).pop().unwrap();
        window.push(p, Some((&kernel, &reference))).unwrap();
        if window.len() >= 2 && (step % 97 == 0 || step == 9_999) {
            let got = window.cached_mmd2_u(&kernel, &reference).unwrap();
            let want = mmd_oracle(reference.summaries(), &window.to_vec(), &kernel);
            worst = worst.max(rel_err(got, want));
        }
    }
    assert!(worst < 1e-9, "worst relative error {worst:e}");

    let sums = window.kernel_sums().unwrap();
    let fresh = MmdSums::recompute(&kernel, &reference, window.iter());
    assert!(rel_err(sums.window_self, fresh.window_self) < 1e-9);
    assert!(rel_err(sums.cross, fresh.cross) < 1e-9);
}

#[test]
fn mmd_is_unbiased_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let kernel = Kernel::rbf(1.0).unwrap();
    let draws: Vec<f64> = (0..1000)
        .map(|_| {
            let x = points(&mut rng, 20, 1, 0.0);
            let y = points(&mut rng, 10, 1, 0.0);
            statistics::mmd::mmd2_u(&ReferenceSet::new(x).unwrap(), &y, &kernel).unwrap()
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / 1000.0;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
    let se = sd / 1000f64.sqrt();
    assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
}

fn scalar_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-5i32..5).prop_map(f64::from), -5.0f64..5.0], 2..40)
}

proptest! {
    #[test]
    fn ks_is_a_symmetric_distance_in_unit_interval(a in scalar_vec(), b in scalar_vec()) {
        let ab = statistics::ks_distance(&ReferenceSet::from_scalars(&a).unwrap(), &window_of(&b)).unwrap().value;
        let ba = statistics::ks_distance(&ReferenceSet::from_scalars(&b).unwrap(), &window_of(&a)).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ba);
        let same = statistics::ks_distance(&ReferenceSet::from_scalars(&a).unwrap(), &window_of(&a)).unwrap().value;
        prop_assert_eq!(same, 0.0);
        // zero exactly when the ECDFs coincide
        prop_assert_eq!(ab == 0.0, ks_oracle(&a, &b) == Ratio::from_integer(0));
    }

    #[test]
    fn mmd_constant_kernel_is_zero_and_roles_are_symmetric(
        a in scalar_vec(), b in scalar_vec(), c in -3.0f64..3.0, bw in 0.1f64..3.0,
    ) {
        let sa: Vec<Summary<f64>> = a.iter().map(|&v| Summary::scalar(v).unwrap()).collect();
        let sb: Vec<Summary<f64>> = b.iter().map(|&v| Summary::scalar(v).unwrap()).collect();
        let ra = ReferenceSet::new(sa.clone()).unwrap();
        let rb = ReferenceSet::new(sb.clone()).unwrap();
        let constant = Kernel::Constant { value: c };
        prop_assert_eq!(statistics::mmd::mmd2_u(&ra, &sb, &constant).unwrap(), 0.0);
        let k = Kernel::rbf(bw).unwrap();
        let ab = statistics::mmd::mmd2_u(&ra, &sb, &k).unwrap();
        let ba = statistics::mmd::mmd2_u(&rb, &sa, &k).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
    }
}
