use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use regflex_core::climatectl::{solve_mpc, EstimatorConfig, EstimatorState, MpcConfig, MpcProblem};
use regflex_core::harness::{replay_tracking, scheduling_problem, ExperimentConfig, ReplayConfig};
use regflex_core::perfmetrics::{pjm_scores_records, tracking_metrics, PjmConfig};
use regflex_core::plantsim::{FanModel, ThermalParams, WeatherSample};
use regflex_core::regsignal::synthetic_regd;
use regflex_core::scheduler::{schedule_reserves, HourReserve};

fn scheduler(c: &mut Criterion) {
    let cfg = ExperimentConfig::with_seed(1);
    let weather = cfg.weather_trace().unwrap();
    let problem = scheduling_problem(&cfg, &weather, 0, [cfg.initial.room_c, cfg.initial.mass_c]);
    c.bench_function("schedule_day", |b| {
        b.iter(|| schedule_reserves(black_box(&problem)).unwrap())
    });
}

fn mpc(c: &mut Criterion) {
    let n = 96;
    let problem = MpcProblem {
        thermal: ThermalParams::default(),
        fan: FanModel::default(),
        forecast: vec![
            WeatherSample {
                t_amb_c: 28.0,
                solar_w_m2: 100.0,
            };
            n
        ],
        internal_gain_w: vec![1500.0; n],
        lower_c: vec![21.0; n],
        upper_c: vec![25.0; n],
        energy_eur_kwh: vec![0.18; n],
        reserves: vec![
            HourReserve {
                r_up_w: 200.0,
                r_down_w: 200.0
            };
            n
        ],
        flow_lo_kg_s: 0.15,
        flow_hi_kg_s: 1.0,
        t_ref_c: None,
        config: MpcConfig::default(),
    };
    let est = EstimatorState::new([22.0, 22.0], &EstimatorConfig::default());
    c.bench_function("mpc_96_slots", |b| {
        b.iter(|| solve_mpc(black_box(&problem), &est).unwrap())
    });
}

fn tracking(c: &mut Criterion) {
    let signal = synthetic_regd(3600.0, 4.0, 11).unwrap();
    let cfg = ReplayConfig {
        baseline_w: 1250.0,
        r_up_w: 750.0,
        r_down_w: 750.0,
        ..ReplayConfig::default()
    };
    c.bench_function("replay_one_hour", |b| {
        b.iter(|| replay_tracking(black_box(&signal), &cfg).unwrap())
    });

    let records = replay_tracking(&signal, &cfg).unwrap().records;
    let reserves = [HourReserve {
        r_up_w: 750.0,
        r_down_w: 750.0,
    }];
    c.bench_function("score_one_hour", |b| {
        b.iter(|| {
            let m = tracking_metrics(black_box(&records)).unwrap();
            let s = pjm_scores_records(&records, &reserves, &PjmConfig::default()).unwrap();
            (m, s)
        })
    });
}

criterion_group!(benches, scheduler, mpc, tracking);
criterion_main!(benches);
