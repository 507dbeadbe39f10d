mod common;

use common::oracles;
use devscreen_core::decision::{
    accuracy_vs_time, calibration, decision_report, earliest_decision, fit_policy,
    optimize_thresholds, select_window, smooth, threshold_grid, verdict, PredictionTrace,
    SmoothingMode, Thresholds, DEFAULT_WINDOWS,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn traces(seed: u64, count: usize, n: usize, outputs: usize, window: usize) -> Vec<PredictionTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let raw = oracles::random_trace(&mut rng, n, outputs);
            let label = rng.random_range(0..2u8);
            PredictionTrace::new(format!("s{i}"), Some(label), raw, window, SmoothingMode::Causal).unwrap()
        })
        .collect()
}

fn rows(trace: &PredictionTrace) -> Vec<Vec<f64>> {
    trace.smoothed.rows().into_iter().map(|r| r.to_vec()).collect()
}

proptest! {
    #[test]
    fn smoothing_matches_windowed_mean(
        values in proptest::collection::vec(-5.0f64..5.0, 1..60),
        w in 0usize..30,
        centered in any::<bool>(),
    ) {
        let n = values.len();
        let window = 2 * (w % n.div_ceil(2)) + 1;
        let mode = if centered { SmoothingMode::Centered } else { SmoothingMode::Causal };
        let raw = Array2::from_shape_vec((n, 1), values.clone()).unwrap();
        let ours = smooth(raw.view(), window, mode).unwrap();
        let want = oracles::smooth(&values, window, centered);
        for (a, b) in ours.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn earliest_decision_matches_scan(seed in any::<u64>(), n in 1usize..50, outputs in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = 2 * rng.random_range(0..=(n - 1) / 2) + 1;
        let trace = &traces(seed, 1, n, outputs, window)[0];
        let taus: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let got = earliest_decision(trace, &Thresholds::PerStep(taus.clone())).unwrap();
        let conf: Vec<f64> = rows(trace).iter().map(|r| oracles::confidence(r)).collect();
        let (t, decided) = oracles::earliest(&conf, &taus);
        prop_assert_eq!((got.time, got.decided), (t, decided));
        prop_assert_eq!(got.verdict, oracles::verdict(&rows(trace)[t]));
    }

    #[test]
    fn zero_threshold_decides_immediately(seed in any::<u64>(), n in 1usize..40, outputs in 1usize..=2) {
        let trace = &traces(seed, 1, n, outputs, 1)[0];
        let d = earliest_decision(trace, &Thresholds::Fixed(0.0)).unwrap();
        prop_assert_eq!((d.time, d.decided), (0, true));
    }

    #[test]
    fn optimized_thresholds_match_exhaustive_search(
        seed in any::<u64>(),
        count in 1usize..12,
        n in 1usize..25,
        outputs in 1usize..=2,
        steps in 1usize..=20,
    ) {
        let set = traces(seed, count, n, outputs, 1);
        let grid = threshold_grid(steps);
        let conf: Vec<Vec<f64>> = set.iter().map(|t| rows(t).iter().map(|r| oracles::confidence(r)).collect()).collect();
        let verdicts: Vec<Vec<u8>> = set.iter().map(|t| rows(t).iter().map(|r| oracles::verdict(r)).collect()).collect();
        let labels: Vec<u8> = set.iter().map(|t| t.label.unwrap()).collect();
        let ours = optimize_thresholds(&set, &grid).unwrap();
        prop_assert_eq!(&ours, &oracles::best_thresholds(&conf, &verdicts, &labels, &grid));
        prop_assert!(ours.iter().all(|t| grid.contains(t)));
    }

    #[test]
    fn accuracy_curve_matches_recount(seed in any::<u64>(), count in 1usize..15, n in 1usize..40) {
        let set: Vec<PredictionTrace> = traces(seed, count, n, 2, 1)
            .into_iter()
            .map(|t| t.resmoothed(1, SmoothingMode::Centered).unwrap())
            .collect();
        let verdicts: Vec<Vec<u8>> = set.iter().map(|t| rows(t).iter().map(|r| oracles::verdict(r)).collect()).collect();
        let labels: Vec<u8> = set.iter().map(|t| t.label.unwrap()).collect();
        let counts = oracles::correct_counts(&verdicts, &labels);
        let acc = accuracy_vs_time(&set).unwrap();
        for (a, c) in acc.iter().zip(&counts) {
            prop_assert_eq!(*a, *c as f64 / count as f64);
        }
    }

    #[test]
    fn argmax_verdict_survives_monotone_transforms(
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let base = verdict(ndarray::arr1(&[a, b]).view());
        let affine = verdict(ndarray::arr1(&[scale * a + shift, scale * b + shift]).view());
        let cubed = verdict(ndarray::arr1(&[a.powi(3), b.powi(3)]).view());
        let logged = verdict(ndarray::arr1(&[(a + 1e-3).ln(), (b + 1e-3).ln()]).view());
        prop_assert_eq!(base, affine);
        prop_assert_eq!(base, cubed);
        prop_assert_eq!(base, logged);
    }

    #[test]
    fn calibration_bins_partition_the_samples(
        samples in proptest::collection::vec((0.0f64..=1.0, any::<bool>()), 1..200),
        n_bins in 1usize..20,
    ) {
        let p: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let y: Vec<u8> = samples.iter().map(|s| s.1 as u8).collect();
        let cal = calibration(&p, &y, n_bins).unwrap();
        prop_assert_eq!(cal.bins.len(), n_bins);
        prop_assert_eq!(cal.bins.iter().map(|b| b.count).sum::<usize>(), samples.len());
        prop_assert!((0.0..=1.0).contains(&cal.ece));
        for bin in cal.bins.iter().filter(|b| b.count > 0) {
            prop_assert!(bin.mean_predicted >= bin.lower - 1e-12 && bin.mean_predicted <= bin.upper + 1e-12);
        }
    }
}

#[test]
fn confidence_first_reaching_threshold_at_41() {
    let n = 97;
    let raw = Array2::from_shape_fn((n, 1), |(t, _)| if t < 41 { 0.5 + 0.2 * t as f64 / 41.0 } else { 0.96 });
    let trace = PredictionTrace::new("w", Some(1), raw, 1, SmoothingMode::Causal).unwrap();
    let d = earliest_decision(&trace, &Thresholds::Fixed(0.9)).unwrap();
    assert_eq!((d.time, d.verdict, d.decided), (41, 1, true));
}

#[test]
fn undecided_sequences_score_at_the_end() {
    let raw = Array2::from_elem((10, 2), 0.5);
    let trace = PredictionTrace::new("w", Some(1), raw, 1, SmoothingMode::Causal).unwrap();
    let d = earliest_decision(&trace, &Thresholds::Fixed(0.5)).unwrap();
    assert_eq!((d.time, d.verdict, d.decided), (9, 1, false));
}

#[test]
fn fitted_policy_separates_clean_traces() {
    // confident, correct traces after a short uncertain prefix
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let make = |label: u8, rng: &mut ChaCha8Rng| {
        let onset = rng.random_range(3..12);
        let raw = Array2::from_shape_fn((40, 1), |(t, _)| {
            let p = if t < onset { 0.5 + rng.random_range(-0.1..0.1) } else { 0.97 };
            if label == 1 {
                p
            } else {
                1.0 - p
            }
        });
        PredictionTrace::new("c", Some(label), raw, 1, SmoothingMode::Causal).unwrap()
    };
    let val: Vec<PredictionTrace> = (0..30).map(|i| make((i % 2) as u8, &mut rng)).collect();
    let test: Vec<PredictionTrace> = (0..30).map(|i| make((i % 2) as u8, &mut rng)).collect();
    let policy = fit_policy(&val, &threshold_grid(20), &DEFAULT_WINDOWS).unwrap();
    assert_eq!(policy.window, select_window(&val, &DEFAULT_WINDOWS).unwrap());
    let report = decision_report(&test, policy.window, &policy.thresholds, &[(0.9, 1)], 10).unwrap();
    assert_eq!(report.final_accuracy, 1.0);
    assert_eq!(report.decided_accuracy, 1.0);
    assert!(report.mean_decision_time < 20.0, "{}", report.mean_decision_time);
}
