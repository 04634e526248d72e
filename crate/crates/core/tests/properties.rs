use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mqtcn::data::{
    encode_cyclic, make_windows, plan_splits, window_count, FeatureFrame, FeatureOptions, FeaturePlan, SplitConfig,
    WindowSample,
};
use mqtcn::metrics::{pinball_loss, winkler};
use mqtcn::tcn::{receptive_field, TcnConfig, TcnModel};
use mqtcn::transfer::{dtw_brute_force, dtw_distance};

fn encoded(t: usize) -> FeatureFrame {
    let start = Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap();
    let frame = FeatureFrame::raw("p", start, (0..t).map(|i| ((i * 7) % 24) as f64).collect());
    FeaturePlan::fit(&frame, 0..t, FeatureOptions::default())
        .unwrap()
        .apply(&frame)
        .unwrap()
}

fn window(p: usize, values: &[f64]) -> WindowSample {
    WindowSample {
        origin: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
        start: 0,
        num_features: 1,
        features: values[..p].to_vec(),
        num_categorical: 0,
        categorical: Vec::new(),
        past_target: values[p..2 * p].to_vec(),
        horizon: vec![0.0; 2],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_count_matches_generated_windows(t in 30usize..200, p in 1usize..12, d in 1usize..6, stride in 1usize..5) {
        let frame = encoded(t);
        let ws = make_windows(&frame, p, d, stride).unwrap_or_default();
        prop_assert_eq!(ws.len(), window_count(t, p, d, stride));
        for w in &ws {
            prop_assert!(w.span().end <= t);
            prop_assert_eq!(w.lookback(), p);
        }
    }

    #[test]
    fn cyclic_features_lie_on_the_unit_circle(hours in 0i64..200_000) {
        let ts = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap() + Duration::hours(hours);
        for (s, c) in encode_cyclic(ts) {
            prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
        }
        let next_day = encode_cyclic(ts + Duration::hours(24));
        prop_assert!((next_day[0].0 - encode_cyclic(ts)[0].0).abs() < 1e-9);
    }

    #[test]
    fn splits_are_ordered_and_disjoint(t in 100usize..5000, folds in 1usize..8) {
        let split = plan_splits(t, SplitConfig { folds, min_segment: 2, ..Default::default() });
        if let Ok(split) = split {
            prop_assert_eq!(split.test.end, t);
            for f in &split.folds {
                prop_assert!(f.train.start < f.train.end && f.train.end <= f.val.start);
                prop_assert!(f.val.end <= split.test.start);
            }
            for pair in split.folds.windows(2) {
                prop_assert!(pair[0].val.end <= pair[1].val.end && pair[0].train.end <= pair[1].train.end);
            }
        }
    }

    #[test]
    fn pinball_is_nonnegative_and_zero_at_truth(q in 0.01f64..0.99, y in -50.0f64..50.0, e in -20.0f64..20.0) {
        prop_assert!(pinball_loss(q, y, y + e).unwrap() >= 0.0);
        prop_assert_eq!(pinball_loss(q, y, y).unwrap(), 0.0);
    }

    #[test]
    fn winkler_never_below_width(y in prop::collection::vec(-5.0f64..5.0, 1..30), w in 0.0f64..3.0) {
        let lower: Vec<f64> = y.iter().map(|v| v.sin()).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + w).collect();
        prop_assert!(winkler(&y, &lower, &upper, 0.15).unwrap() >= w - 1e-12);
    }

    #[test]
    fn dtw_matches_enumeration_and_is_symmetric(
        a in prop::collection::vec(-3.0f64..3.0, 1..6),
        b in prop::collection::vec(-3.0f64..3.0, 1..6),
    ) {
        let ab = dtw_distance(&a, &b, None).unwrap().distance;
        let ba = dtw_distance(&b, &a, None).unwrap().distance;
        prop_assert!((ab - dtw_brute_force(&a, &b)).abs() < 1e-9);
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn output_ignores_inputs_beyond_the_receptive_field(
        blocks in 1usize..4,
        kernel in 2usize..4,
        seed in 0u64..1000,
        values in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let p = 32;
        let mut config = TcnConfig::new(vec!["x".into(), "target".into()], Vec::new(), p, 2, vec![0.1, 0.5, 0.9])
            .with_blocks(blocks, 4);
        config.kernel_size = kernel;
        config.head_hidden = 4;
        let rf = receptive_field(kernel, &config.dilations);
        prop_assume!(rf < p);
        let model = TcnModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let base = window(p, &values);
        let out = model.forward(&base).unwrap();
        for pos in 0..p - rf {
            let mut w = base.clone();
            w.features[pos] += 1.0;
            w.past_target[pos] -= 1.0;
            let perturbed = model.forward(&w).unwrap();
            prop_assert_eq!(perturbed.values(), out.values());
        }
    }
}
