use std::path::Path;

use proptest::prelude::*;

use regflex_core::harness::{
    read_manifest, run_experiment, score_files, simulate, BenchmarkMode, ExperimentConfig,
    SignalSource, SLOTS_PER_DAY, TICKS_PER_SLOT,
};

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn cadence_counts_and_score_closure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::with_seed(31);
    let art = run_experiment(&cfg, dir.path()).unwrap();
    let m = &art.manifest;
    assert_eq!(m.schedule_commits, 1);
    assert_eq!(m.mpc_solves, 96);
    assert_eq!(m.ticks, 21_600);
    assert_eq!(read_manifest(&art.manifest_path).unwrap(), *m);

    let again = tempfile::tempdir().unwrap();
    let out = score_files(&art.tracking, &art.reserve, again.path()).unwrap();
    assert_eq!(bytes(&out.report), bytes(&art.report));
    assert_eq!(bytes(&out.scores), bytes(&art.scores));
}

#[test]
fn disabling_benchmark_leaves_cell_a_untouched() {
    let with_b = tempfile::tempdir().unwrap();
    let without_b = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::with_seed(32);
    let a = run_experiment(&cfg, with_b.path()).unwrap();
    let mut solo = cfg.clone();
    solo.benchmark = BenchmarkMode::Disabled;
    let b = run_experiment(&solo, without_b.path()).unwrap();
    assert!(b.benchmark.is_none());
    for (x, y) in [
        (&a.reserve, &b.reserve),
        (&a.schedule, &b.schedule),
        (&a.forecast, &b.forecast),
        (&a.setpoint, &b.setpoint),
        (&a.measure, &b.measure),
        (&a.tracking, &b.tracking),
        (&a.report, &b.report),
        (&a.scores, &b.scores),
        (&a.sweep, &b.sweep),
    ] {
        assert_eq!(bytes(x), bytes(y), "{}", x.display());
    }
}

#[test]
fn zero_reserves_make_the_cells_identical() {
    let mut cfg = ExperimentConfig::with_seed(33);
    cfg.force_zero_reserves = true;
    let sim = simulate(&cfg).unwrap();
    let b = sim.cell_b.as_ref().unwrap();
    assert!(sim
        .hourly_reserves()
        .iter()
        .all(|r| r.r_up_w == 0.0 && r.r_down_w == 0.0));
    assert_eq!(sim.cell_a.measurements, b.measurements);
    assert_eq!(sim.cell_a.setpoints, b.setpoints);
    assert_eq!(sim.cell_a.cumulative, b.cumulative);
}

#[test]
fn identical_seeds_give_identical_artifacts() {
    let mut cfg = ExperimentConfig::with_seed(34);
    cfg.signal = SignalSource::Triangle { cycle_s: 600.0 };
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let a = run_experiment(&cfg, first.path()).unwrap();
    let b = run_experiment(&cfg, second.path()).unwrap();
    assert_eq!(a.manifest, b.manifest);
    assert_eq!(bytes(&a.manifest_path), bytes(&b.manifest_path));
    for name in a.manifest.files.keys() {
        assert_eq!(
            bytes(&first.path().join(name)),
            bytes(&second.path().join(name)),
            "{name}"
        );
    }
}

#[test]
fn setback_raises_capacity_over_two_days() {
    for symmetric in [true, false] {
        let mut cfg = ExperimentConfig::with_seed(35);
        cfg.days = 2;
        cfg.symmetric = symmetric;
        cfg.benchmark = BenchmarkMode::Disabled;
        let with = simulate(&cfg).unwrap();
        cfg.setback = false;
        let without = simulate(&cfg).unwrap();
        assert_eq!(with.schedule_commits(), 2);
        assert_eq!(with.ticks, 2 * SLOTS_PER_DAY * TICKS_PER_SLOT);
        assert_eq!(with.cell_a.mpc_solves, 2 * SLOTS_PER_DAY);
        for day in 0..2 {
            let (s, n) = (
                with.schedules[day].average_capacity_w(),
                without.schedules[day].average_capacity_w(),
            );
            eprintln!("symmetric {symmetric} day {day}: {s:.1} W with setback, {n:.1} W without");
            assert!(s > n);
        }
    }
}

#[test]
fn energy_efficient_benchmark_shows_availability_loss() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::with_seed(36);
    cfg.benchmark = BenchmarkMode::EnergyEfficient;
    let art = run_experiment(&cfg, dir.path()).unwrap();
    let eff = std::fs::read_to_string(art.benchmark.unwrap().efficiency).unwrap();
    let row: Vec<&str> = eff.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "availability");
    let (fan_a, fan_b): (f64, f64) = (row[3].parse().unwrap(), row[4].parse().unwrap());
    let loss: f64 = row[7].parse().unwrap();
    assert!(fan_a > fan_b, "{fan_a} vs {fan_b}");
    assert!(loss > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_survives_toml_round_trip(
        seed in any::<u64>(),
        days in 1usize..30,
        setback in any::<bool>(),
        symmetric in any::<bool>(),
        bias in -3.0..3.0f64,
        cycle in 60.0..3600.0f64,
        zero in any::<bool>(),
    ) {
        let mut cfg = ExperimentConfig::with_seed(seed);
        cfg.days = days;
        cfg.setback = setback;
        cfg.symmetric = symmetric;
        cfg.forecast_bias.bias_c = bias;
        cfg.signal = SignalSource::Triangle { cycle_s: cycle };
        cfg.force_zero_reserves = zero;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
