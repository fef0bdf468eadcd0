use nalgebra::{Matrix2, Vector2};
use proptest::prelude::*;

use regflex_core::harness::{replay_tracking, ReplayConfig};
use regflex_core::plantsim::{
    cooling_power, step_plant, FanModel, PlantParams, PlantState, ThermalParams, WeatherSample,
};
use regflex_core::regsignal::{triangle_wave, DelayModel, RegulationSignal};

fn weather(t_amb_c: f64, solar_w_m2: f64) -> WeatherSample {
    WeatherSample {
        t_amb_c,
        solar_w_m2,
    }
}

fn thermal_params() -> impl Strategy<Value = ThermalParams> {
    (
        5e5f64..5e6,
        2e6f64..5e7,
        50.0f64..1000.0,
        10.0f64..300.0,
        5.0f64..100.0,
        0.0f64..5.0,
    )
        .prop_map(|(cr, cm, h, uar, uam, sa)| ThermalParams {
            c_room_j_k: cr,
            c_mass_j_k: cm,
            h_room_mass_w_k: h,
            ua_room_amb_w_k: uar,
            ua_mass_amb_w_k: uam,
            solar_aperture_m2: sa,
            ..ThermalParams::default()
        })
}

/// Steady state of the continuous model at a fixed flow and supply air.
fn steady_room(p: &ThermalParams, flow: f64, t_amb: f64, solar: f64, gain: f64, t_sat: f64) -> f64 {
    let (a, b) = p.continuous(flow);
    let u = nalgebra::SMatrix::<f64, 4, 1>::new(t_amb, solar, gain, t_sat);
    let x = a.lu().solve(&(-(b * u))).unwrap();
    x[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn free_dynamics_are_stable(p in thermal_params(), flow in 0.0f64..1.1, step in 1.0f64..1800.0) {
        prop_assert!(p.discretize(flow, step).spectral_radius() < 1.0);
        let d = p.discretize(flow, step);
        // With every input at the common temperature the state stays put.
        let t = 20.0;
        let x = d.a * Vector2::new(t, t) + d.b * nalgebra::SMatrix::<f64, 4, 1>::new(t, 0.0, 0.0, t);
        prop_assert!((x[0] - t).abs() < 1e-9 && (x[1] - t).abs() < 1e-9);
    }

    #[test]
    fn steady_room_is_non_increasing_in_air_flow(
        p in thermal_params(),
        m1 in 0.05f64..1.0,
        dm in 0.0f64..0.5,
        t_amb in 10.0f64..35.0,
        solar in 0.0f64..600.0,
        gain in 0.0f64..4000.0,
    ) {
        let t1 = steady_room(&p, m1, t_amb, solar, gain, 17.0);
        let t2 = steady_room(&p, m1 + dm, t_amb, solar, gain, 17.0);
        prop_assume!(t1 > 17.0);
        prop_assert!(t2 <= t1 + 1e-9, "{t2} > {t1}");
    }

    #[test]
    fn fan_curve_is_invertible_and_increasing(rated in 500.0f64..5000.0, gain in 0.5f64..2.0, s in 0.1f64..0.9) {
        let fan = FanModel::cubic(rated, gain);
        prop_assert!(fan.is_monotone());
        let m = fan.speed_to_flow(s);
        let back = fan.fan_power_inverse(fan.fan_power(m));
        prop_assert!(!back.clamped);
        prop_assert!((back.flow_kg_s - m).abs() <= 1e-6 * m);
        prop_assert!(fan.fan_power(m * 1.01) > fan.fan_power(m));
    }

    #[test]
    fn heat_gain_shape(s in 0.0f64..1.0) {
        let g = FanModel::default().heat_gain;
        let r = g.rise_c(s);
        if s <= 0.5 {
            prop_assert_eq!(r, 0.0);
        }
        if s <= 0.9 {
            prop_assert!(r <= 1.0 + 1e-12);
        }
        prop_assert!(g.rise_c((s + 0.05).min(1.0)) >= r);
    }

    #[test]
    fn plant_state_invariants_hold_along_random_commands(
        cmds in prop::collection::vec(0.0f64..0.95, 50..400),
        t_amb in 5.0f64..38.0,
        gain in 0.0f64..5000.0,
        room in 15.0f64..30.0,
    ) {
        let params = PlantParams::default();
        let mut s = PlantState::new(&params, room, room, 0.3);
        for i in 0..cmds.len() {
            // Commands held for 20 ticks so the drive and loops can respond.
            let cmd = cmds[i / 20 * 20];
            s = step_plant(&params, &s, cmd, weather(t_amb, 200.0), gain, 4.0).unwrap();
            let ch = &s.chilled;
            prop_assert!((0.0..=1.0).contains(&ch.valve));
            prop_assert!(s.flow_kg_s >= 0.0);
            prop_assert!(s.speed <= params.fan.max_speed + 1e-12);
            prop_assert_eq!(s.fan_power_w, params.fan.fan_power(s.flow_kg_s));
            if cooling_power(ch, &params.chilled) > 0.0 {
                prop_assert!(ch.t_chws_c <= ch.t_chwr_c);
            }
            for v in [s.t_room_c, s.t_mass_c, ch.t_sat_c, ch.tank_c] {
                prop_assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn stages_do_not_chatter_inside_the_band(
        cmds in prop::collection::vec(0.2f64..0.9, 10..40),
        gain in 0.0f64..4000.0,
    ) {
        let params = PlantParams::default();
        let mut s = PlantState::new(&params, 24.0, 24.0, 0.4);
        let set = params.chilled.tank_setpoint_c;
        let band = params.chilled.hysteresis_c;
        for &c in &cmds {
            for _ in 0..60 {
                let prev = s.chilled.stage;
                s = step_plant(&params, &s, c, weather(30.0, 300.0), gain, 4.0).unwrap();
                let (st, tank) = (s.chilled.stage, s.chilled.tank_c);
                if st > prev {
                    prop_assert!(tank >= set + band * f64::from(st) - 1e-12);
                }
                if st < prev {
                    prop_assert!(tank <= set + band * f64::from(st) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn cooled_zone_does_not_warm(
        room in 22.0f64..30.0,
        below in 0.0f64..8.0,
        speed in 0.25f64..0.5,
    ) {
        let params = PlantParams::default();
        let mut s = PlantState::new(&params, room, room, speed);
        for _ in 0..900 {
            s = step_plant(&params, &s, speed, weather(room - below, 0.0), 0.0, 4.0).unwrap();
            prop_assert!(s.t_room_c <= room + 1e-9, "{} > {room}", s.t_room_c);
        }
    }

    #[test]
    fn trajectories_are_bit_identical(
        cmds in prop::collection::vec(0.0f64..0.9, 1..200),
        t_amb in 5.0f64..38.0,
    ) {
        let params = PlantParams::default();
        let run = || {
            let mut s = PlantState::new(&params, 23.0, 22.0, 0.3);
            let mut out = Vec::new();
            for &c in &cmds {
                s = step_plant(&params, &s, c, weather(t_amb, 100.0), 1500.0, 4.0).unwrap();
                out.push(s.clone());
            }
            out
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn zero_mean_regulation_barely_changes_fan_energy(
        baseline in 500.0f64..1300.0,
        share in 0.05f64..0.3,
        cycles_per_hour in 1usize..12,
        seed in any::<u64>(),
    ) {
        let cycle = 3600.0 / cycles_per_hour as f64;
        let duration = 12.0 * 3600.0;
        let sig = triangle_wave(duration, 4.0, cycle).unwrap();
        let flat = RegulationSignal::from_values(4.0, &vec![0.0; sig.len()]).unwrap();
        let r = (share * 2500.0).min(baseline - 10.0);
        let cfg = ReplayConfig {
            baseline_w: baseline,
            r_up_w: r,
            r_down_w: r,
            delay: Some(DelayModel::field_default(seed)),
            ..ReplayConfig::default()
        };
        let reg = replay_tracking(&sig, &cfg).unwrap().final_state.fan_energy_wh;
        let base = replay_tracking(&flat, &cfg).unwrap().final_state.fan_energy_wh;
        prop_assert!((reg - base).abs() / base < 0.02, "{reg} vs {base}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn chiller_power_follows_fan_power(
        s1 in 0.2f64..0.7,
        ds in 0.1f64..0.2,
        t_amb in 20.0f64..34.0,
        gain in 500.0f64..3000.0,
    ) {
        let params = PlantParams::default();
        let avg = |speed: f64| {
            let mut s = PlantState::new(&params, 24.0, 24.0, speed);
            for _ in 0..3600 {
                s = step_plant(&params, &s, speed, weather(t_amb, 200.0), gain, 4.0).unwrap();
            }
            let e0 = s.chiller_energy_wh;
            for _ in 0..5400 {
                s = step_plant(&params, &s, speed, weather(t_amb, 200.0), gain, 4.0).unwrap();
            }
            (s.chiller_energy_wh - e0) / 6.0
        };
        let (lo, hi) = (avg(s1), avg(s1 + ds));
        prop_assert!(hi >= lo * 0.98, "chiller {hi} W at higher speed vs {lo} W");
    }
}

#[test]
fn two_state_cooling_form_is_metzler() {
    let (a, _) = ThermalParams::default().continuous_cooling_form();
    let off: Matrix2<f64> = a - Matrix2::from_diagonal(&a.diagonal());
    assert!(off.iter().all(|&v| v >= 0.0));
}
