use proptest::prelude::*;

use regflex_core::harness::{replay_tracking, ReplayConfig};
use regflex_core::perfmetrics::tracking_metrics;
use regflex_core::plantsim::FanModel;
use regflex_core::regsignal::{synthetic_regd, DelayModel, RegulationSignal};
use regflex_core::regtrack::{
    desired_power, track_step, Mode, TrackInput, TrackerConfig, TrackerState,
};

fn input(p_d_w: f64, p_f_w: f64, r: f64) -> TrackInput {
    TrackInput {
        p_d_w,
        p_f_w,
        r_u_w: r,
        r_d_w: r,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn desired_power_stays_in_range(
        p_b in 0.0f64..2000.0,
        w in -1.0f64..=1.0,
        r_u in 0.0f64..1500.0,
        r_d in 0.0f64..1500.0,
    ) {
        let fan = FanModel::default();
        let (lo, hi) = (fan.min_power(), fan.max_power());
        let d = desired_power(p_b, w, r_u, r_d, lo, hi);
        prop_assert!(d.p_d_w >= lo && d.p_d_w <= hi);
        let raw = p_b + w * if w >= 0.0 { r_d } else { r_u };
        prop_assert_eq!(d.clamped, raw < lo || raw > hi);
        if !d.clamped {
            prop_assert_eq!(d.p_d_w, raw);
        }
    }

    #[test]
    fn command_and_integrator_stay_bounded(
        steps in prop::collection::vec((0.0f64..2500.0, -500.0f64..500.0, 0.0f64..800.0), 1..300),
        s0 in 0.0f64..1.0,
    ) {
        let fan = FanModel::default();
        let cfg = TrackerConfig::default();
        let mut st = TrackerState::new(&fan, &cfg, s0);
        for (p_d, err, r) in steps {
            st = track_step(&st, &input(p_d, p_d - err, r), &fan, &cfg);
            prop_assert!(st.last_cmd >= fan.min_speed && st.last_cmd <= 0.90);
            prop_assert!(st.integrator >= fan.min_speed && st.integrator <= fan.max_speed);
        }
    }

    #[test]
    fn feedforward_hands_over_without_a_jump(
        p_d in 100.0f64..1500.0,
        err in -80.0f64..80.0,
        jump in 200.0f64..800.0,
        r in 60.0f64..600.0,
    ) {
        let fan = FanModel::default();
        let cfg = TrackerConfig::default();
        let st = TrackerState::new(&fan, &cfg, 0.4);
        let st = track_step(&st, &input(p_d - jump, p_d - jump, r), &fan, &cfg);
        let ff = track_step(&st, &input(p_d, p_d - err, r), &fan, &cfg);
        prop_assert_eq!(ff.mode, Mode::Feedforward);
        let pi = track_step(&ff, &input(p_d, p_d - err, r), &fan, &cfg);
        prop_assert_eq!(pi.mode, Mode::Pi);
        let unclamped = ff.integrator > fan.min_speed && ff.integrator < fan.max_speed;
        prop_assume!(unclamped && pi.last_cmd < 0.90 && pi.last_cmd > fan.min_speed);
        prop_assert!((pi.last_cmd - ff.last_cmd).abs() < 1e-12);
    }

    #[test]
    fn capacity_step_at_equilibrium_does_not_kick(
        p_d in 100.0f64..1500.0,
        r1 in 60.0f64..600.0,
        r2 in 60.0f64..600.0,
    ) {
        prop_assume!((r1 - r2).abs() > 1.0);
        let fan = FanModel::default();
        let cfg = TrackerConfig::default();
        let speed = fan.flow_to_speed(fan.fan_power_inverse(p_d).flow_kg_s);
        let mut st = TrackerState::new(&fan, &cfg, speed);
        for _ in 0..5 {
            st = track_step(&st, &input(p_d, p_d, r1), &fan, &cfg);
        }
        let before = st.last_cmd;
        let after = track_step(&st, &input(p_d, p_d, r2), &fan, &cfg);
        prop_assert_eq!(after.mode, Mode::Feedforward);
        prop_assert!((after.last_cmd - before).abs() < 1e-9);
    }
}

/// Largest non-DC amplitude of a real series, naive DFT.
fn peak_amplitude(x: &[f64]) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (1..n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let a = 2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
                re += (v - mean) * a.cos();
                im -= (v - mean) * a.sin();
            }
            2.0 * (re * re + im * im).sqrt() / n as f64
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_loop_settles_without_oscillation(
        baseline in 300.0f64..1500.0,
        w in -1.0f64..=1.0,
        r in 60.0f64..300.0,
        seed in any::<u64>(),
    ) {
        let sig = RegulationSignal::from_values(4.0, &vec![w; 600]).unwrap();
        let out = replay_tracking(&sig, &ReplayConfig {
            baseline_w: baseline,
            r_up_w: r,
            r_down_w: r,
            delay: Some(DelayModel::field_default(seed)),
            ..ReplayConfig::default()
        }).unwrap();
        let tail: Vec<f64> = out.records[344..].iter().map(|r| r.p_f_w).collect();
        prop_assert!(tail.iter().all(|v| v.is_finite() && *v <= 2500.0));
        prop_assert!(peak_amplitude(&tail) < 0.5, "oscillation {}", peak_amplitude(&tail));
    }
}

#[test]
fn six_hour_replay_tracks_within_five_percent() {
    let sig = synthetic_regd(6.0 * 3600.0, 4.0, 21).unwrap();
    let out = replay_tracking(
        &sig,
        &ReplayConfig {
            baseline_w: 1250.0,
            r_up_w: 750.0,
            r_down_w: 750.0,
            delay: Some(DelayModel::field_default(21)),
            ..ReplayConfig::default()
        },
    )
    .unwrap();
    let m = tracking_metrics(&out.records).unwrap();
    println!("e_t_mape {:.4}, e_me {:.2} W", m.e_t_mape, m.e_me_w);
    assert!(m.e_t_mape <= 0.05);
}
