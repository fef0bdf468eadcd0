use proptest::prelude::*;

use regflex_core::regsignal::{
    downsample, load_signal_csv, replay, synthetic_regd, DelayModel, RegulationSignal, SignalHold,
};

fn signal(values: &[f64]) -> RegulationSignal {
    RegulationSignal::from_values(2.0, values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn zero_delay_replay_of_downsampled_signal_iterates_it(
        values in prop::collection::vec(-1.0f64..=1.0, 1..300),
        ratio in 1usize..5,
    ) {
        let src = signal(&values);
        let ds = downsample(&src, 2.0 * ratio as f64).unwrap();
        prop_assert_eq!(ds.len(), values.len().div_ceil(ratio));
        let mut hold = SignalHold::from_signal(&ds, &DelayModel::constant(0.0)).unwrap();
        for s in ds.samples() {
            prop_assert_eq!(hold.value_at(s.t), s.w);
        }
        for (i, s) in ds.samples().iter().enumerate() {
            prop_assert_eq!(s.w, values[i * ratio]);
        }
    }

    #[test]
    fn hold_never_goes_back_to_older_samples(
        seed in any::<u64>(),
        mean in 0.5f64..6.0,
        spread in 1.0f64..2.0,
    ) {
        let sig = synthetic_regd(1200.0, 2.0, seed).unwrap();
        let model = DelayModel { outlier_cap_s: None, ..DelayModel::lognormal(mean, mean * spread, seed) };
        let mut hold = SignalHold::from_signal(&sig, &model).unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in 0..300 {
            if let Some(s) = hold.sample_at(k as f64 * 4.0) {
                prop_assert!(s.t_emitted >= last);
                prop_assert!(s.t_available <= k as f64 * 4.0);
                last = s.t_emitted;
            }
        }
    }

    #[test]
    fn sampled_delays_are_non_negative_capped_and_seeded(
        seed in any::<u64>(),
        mean in 0.5f64..4.0,
        spread in 1.0f64..3.0,
        cap in 1.0f64..10.0,
    ) {
        let model = DelayModel { outlier_cap_s: Some(cap), ..DelayModel::lognormal(mean, mean * spread, seed) };
        let sig = synthetic_regd(400.0, 2.0, 1).unwrap();
        let a: Vec<f64> = replay(&sig, &model).unwrap().map(|s| s.t_available - s.t_emitted).collect();
        let b: Vec<f64> = replay(&sig, &model).unwrap().map(|s| s.t_available - s.t_emitted).collect();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|&d| d >= 0.0 && d <= cap + 1e-12));
    }

    #[test]
    fn loader_accepts_exactly_in_range_values(
        values in prop::collection::vec(-1.3f64..1.3, 1..50),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("signal.csv");
        let mut text = String::from("t_s,w\n");
        for (i, w) in values.iter().enumerate() {
            text.push_str(&format!("{},{w}\n", 2 * i));
        }
        std::fs::write(&path, text).unwrap();
        let ok = values.iter().all(|w| (-1.0..=1.0).contains(w));
        match load_signal_csv(&path) {
            Ok(sig) => {
                prop_assert!(ok);
                prop_assert_eq!(sig.len(), values.len());
                prop_assert!(sig.samples().windows(2).all(|p| p[1].t > p[0].t));
            }
            Err(_) => prop_assert!(!ok),
        }
    }
}

#[test]
fn delay_moments_match_configuration() {
    for seed in [1, 2, 3] {
        let mut s = DelayModel::field_default(seed).sampler().unwrap();
        let mut d: Vec<f64> = (0..100_000).map(|_| s.next_delay()).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        d.sort_by(f64::total_cmp);
        let p95 = d[(0.95 * d.len() as f64) as usize];
        assert!((mean / 2.89 - 1.0).abs() < 0.02, "mean {mean}");
        assert!((p95 / 2.99 - 1.0).abs() < 0.02, "p95 {p95}");
    }
}
