use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::run::{simulate, CellLog, Simulation};
use super::{BenchmarkMode, ExperimentConfig, SLOTS_PER_DAY, TICKS_PER_SLOT};
use crate::climatectl::write_setpoint_csv;
use crate::csvio::{self, num};
use crate::error::{Error, Result};
use crate::perfmetrics::{
    efficiency_report, pjm_scores_records, report_rows, reserve_threshold_sweep, tracking_metrics,
    write_report_csv, write_scores_csv, write_sweep_csv, LossKind, PjmConfig,
};
use crate::plantsim::write_measure_csv;
use crate::regtrack::{read_tracking_csv, write_tracking_csv};
use crate::scheduler::{
    read_reserve_csv, write_reserve_csv, write_schedule_csv, HourReserve, ReserveSchedule,
};

pub const HOURLY_HEADER: [&str; 10] = [
    "hour",
    "R_u_W",
    "R_d_W",
    "S_tot",
    "P_fan_A_W",
    "P_fan_B_W",
    "P_chiller_A_W",
    "P_chiller_B_W",
    "T_room_A_C",
    "T_room_B_C",
];

pub const EFFICIENCY_HEADER: [&str; 11] = [
    "kind",
    "t_start_s",
    "t_end_s",
    "fan_A_kWh",
    "fan_B_kWh",
    "cooling_A_kWh",
    "cooling_B_kWh",
    "fan_loss_pct",
    "cooling_loss_pct",
    "T_room_A_C",
    "T_room_B_C",
];

/// Run record: config hash, cadence counts and artifact digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config_sha256: String,
    pub days: usize,
    pub schedule_commits: usize,
    pub mpc_solves: usize,
    pub ticks: usize,
    pub mpc_relaxed: usize,
    pub reserve_conflicts: usize,
    pub schedule_fallbacks: usize,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub manifest_path: PathBuf,
    pub reserve: PathBuf,
    pub schedule: PathBuf,
    pub forecast: PathBuf,
    pub setpoint: PathBuf,
    pub measure: PathBuf,
    pub tracking: PathBuf,
    pub report: PathBuf,
    pub scores: PathBuf,
    pub sweep: PathBuf,
    pub hourly: PathBuf,
    /// Benchmark cell outputs and the efficiency comparison, when simulated.
    pub benchmark: Option<BenchmarkArtifacts>,
    pub manifest: Manifest,
}

#[derive(Debug, Clone)]
pub struct BenchmarkArtifacts {
    pub setpoint: PathBuf,
    pub measure: PathBuf,
    pub tracking: PathBuf,
    pub efficiency: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// All committed days as one schedule.
pub fn combined_schedule(sim: &Simulation) -> ReserveSchedule {
    let spb = sim.schedules.first().map_or(4, |s| s.slots_per_block);
    ReserveSchedule {
        slots_per_block: spb,
        hours: sim.hourly_reserves(),
        slots: sim
            .schedules
            .iter()
            .flat_map(|s| s.slots.iter().copied())
            .collect(),
    }
}

/// Simulates `cfg` and writes every artifact into `dir`. A simulation fault
/// is recorded in `fault.txt` before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sim = match simulate(cfg) {
        Ok(s) => s,
        Err(e) => {
            if let Error::SimulationFault { .. } = e {
                let p = dir.join("fault.txt");
                std::fs::write(&p, format!("{e}\n")).map_err(|io| Error::io(&p, io))?;
            }
            return Err(e);
        }
    };
    write_artifacts(cfg, &sim, dir)
}

fn write_cell(dir: &Path, prefix: &str, log: &CellLog) -> Result<[PathBuf; 3]> {
    let setpoint = dir.join(format!("{prefix}setpoint.csv"));
    let measure = dir.join(format!("{prefix}measure.csv"));
    let tracking = dir.join(format!("{prefix}tracking.csv"));
    write_setpoint_csv(&setpoint, &log.setpoints)?;
    write_measure_csv(&measure, &log.measurements)?;
    write_tracking_csv(&tracking, &log.tracking)?;
    Ok([setpoint, measure, tracking])
}

/// Writes the artifacts of a finished simulation.
pub fn write_artifacts(
    cfg: &ExperimentConfig,
    sim: &Simulation,
    dir: &Path,
) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let days = cfg.days;
    let manifest = Manifest {
        config_sha256: String::new(),
        days,
        schedule_commits: sim.schedule_commits(),
        mpc_solves: sim.cell_a.mpc_solves,
        ticks: sim.ticks,
        mpc_relaxed: sim.cell_a.mpc_relaxed,
        reserve_conflicts: sim.cell_a.reserve_conflicts,
        schedule_fallbacks: sim.schedule_fallbacks,
        files: BTreeMap::new(),
    };
    let expected = (
        days,
        SLOTS_PER_DAY * days,
        SLOTS_PER_DAY * TICKS_PER_SLOT * days,
    );
    let found = (
        manifest.schedule_commits,
        manifest.mpc_solves,
        manifest.ticks,
    );
    if found != expected {
        return Err(Error::SimulationFault {
            t_s: sim.ticks as f64 * super::TICK_S,
            module: "harness",
            detail: format!("cadence (commits, solves, ticks) = {found:?}, expected {expected:?}"),
        });
    }

    let config = dir.join("config.toml");
    let text = cfg.to_toml();
    std::fs::write(&config, &text).map_err(|e| Error::io(&config, e))?;

    let schedule_all = combined_schedule(sim);
    let reserve = dir.join("reserve.csv");
    let schedule = dir.join("schedule.csv");
    let forecast = dir.join("forecast.csv");
    write_reserve_csv(&reserve, &schedule_all)?;
    write_schedule_csv(&schedule, &schedule_all)?;
    sim.weather.write_forecast_csv(&forecast)?;
    let [setpoint, measure, tracking] = write_cell(dir, "", &sim.cell_a)?;

    let reserves = sim.hourly_reserves();
    let pjm = PjmConfig::default();
    let scores_report = pjm_scores_records(&sim.cell_a.tracking, &reserves, &pjm)?;
    let metrics = tracking_metrics(&sim.cell_a.tracking)?;
    let report = dir.join("report.csv");
    let scores = dir.join("scores.csv");
    let sweep = dir.join("sweep.csv");
    write_report_csv(&report, &report_rows(&metrics, &scores_report))?;
    write_scores_csv(&scores, &scores_report)?;
    write_sweep_csv(
        &sweep,
        &reserve_threshold_sweep(&sim.cell_a.tracking, &cfg.sweep_thresholds_w)?,
    )?;

    let hourly = dir.join("hourly.csv");
    let s_tot: BTreeMap<usize, f64> = scores_report
        .hours
        .iter()
        .filter(|s| s.valid)
        .map(|s| (s.hour, s.s_tot))
        .collect();
    write_hourly_csv(&hourly, &reserves, &s_tot, &sim.cell_a, sim.cell_b.as_ref())?;

    let benchmark = match &sim.cell_b {
        Some(b) => {
            let [setpoint, measure, tracking] = write_cell(dir, "benchmark_", b)?;
            let efficiency = dir.join("efficiency.csv");
            let kind = match cfg.benchmark {
                BenchmarkMode::EnergyEfficient => LossKind::Availability,
                _ => LossKind::Utilization,
            };
            let n = sim.cell_a.slots();
            let rep = efficiency_report(&sim.cell_a.summary(0, n), &b.summary(0, n), kind)?;
            let kind = match rep.kind {
                LossKind::Availability => "availability",
                LossKind::Utilization => "utilization",
            };
            csvio::write_rows(
                &efficiency,
                &EFFICIENCY_HEADER,
                [vec![
                    kind.to_string(),
                    num(rep.regulated.t_start_s),
                    num(rep.regulated.t_end_s),
                    num(rep.regulated.fan_kwh),
                    num(rep.benchmark.fan_kwh),
                    num(rep.regulated.cooling_kwh),
                    num(rep.benchmark.cooling_kwh),
                    num(rep.fan_loss_pct),
                    num(rep.cooling_loss_pct),
                    num(rep.regulated.mean_room_c),
                    num(rep.benchmark.mean_room_c),
                ]],
            )?;
            Some(BenchmarkArtifacts {
                setpoint,
                measure,
                tracking,
                efficiency,
            })
        }
        None => None,
    };

    let mut files: Vec<&PathBuf> = vec![
        &reserve, &schedule, &forecast, &setpoint, &measure, &tracking, &report, &scores, &sweep,
        &hourly,
    ];
    if let Some(b) = &benchmark {
        files.extend([&b.setpoint, &b.measure, &b.tracking, &b.efficiency]);
    }
    let mut manifest = manifest;
    manifest.config_sha256 = sha256_hex(text.as_bytes());
    for f in files {
        let name = f
            .file_name()
            .expect("file path")
            .to_string_lossy()
            .into_owned();
        manifest.files.insert(name, file_sha256(f)?);
    }
    let manifest_path = dir.join("manifest.toml");
    let mtext = toml::to_string(&manifest).expect("manifest serializes to TOML");
    std::fs::write(&manifest_path, mtext).map_err(|e| Error::io(&manifest_path, e))?;

    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        config,
        manifest_path,
        reserve,
        schedule,
        forecast,
        setpoint,
        measure,
        tracking,
        report,
        scores,
        sweep,
        hourly,
        benchmark,
        manifest,
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Hourly averages of both cells next to the committed capacities.
pub fn write_hourly_csv(
    path: &Path,
    reserves: &[HourReserve],
    s_tot: &BTreeMap<usize, f64>,
    a: &CellLog,
    b: Option<&CellLog>,
) -> Result<()> {
    let spb = SLOTS_PER_DAY / 24;
    let hours = a.slots() / spb;
    let opt = |v: Option<f64>| v.map_or(String::new(), num);
    // Energy in Wh over one hour equals the mean power in W.
    let mean_w = |log: &CellLog, h: usize, i: usize| {
        log.cumulative[(h + 1) * spb][i] - log.cumulative[h * spb][i]
    };
    let room = |log: &CellLog, h: usize| {
        log.slot_mean_room_c[h * spb..(h + 1) * spb]
            .iter()
            .sum::<f64>()
            / spb as f64
    };
    csvio::write_rows(
        path,
        &HOURLY_HEADER,
        (0..hours).map(|h| {
            let r = reserves.get(h).copied().unwrap_or_default();
            vec![
                h.to_string(),
                num(r.r_up_w),
                num(r.r_down_w),
                opt(s_tot.get(&h).copied()),
                num(mean_w(a, h, 0)),
                opt(b.map(|b| mean_w(b, h, 0))),
                num(mean_w(a, h, 3)),
                opt(b.map(|b| mean_w(b, h, 3))),
                num(room(a, h)),
                opt(b.map(|b| room(b, h))),
            ]
        }),
    )
}

#[derive(Debug, Clone)]
pub struct ScoreOutputs {
    pub report: PathBuf,
    pub scores: PathBuf,
}

/// Recomputes report.csv and scores.csv from a tracking log and its hourly
/// capacities, without simulating.
pub fn score_files(tracking: &Path, reserves: &Path, out_dir: &Path) -> Result<ScoreOutputs> {
    let records = read_tracking_csv(tracking)?;
    let hours = read_reserve_csv(reserves)?;
    let metrics = tracking_metrics(&records)?;
    let scores_report = pjm_scores_records(&records, &hours, &PjmConfig::default())?;
    let out = ScoreOutputs {
        report: out_dir.join("report.csv"),
        scores: out_dir.join("scores.csv"),
    };
    write_report_csv(&out.report, &report_rows(&metrics, &scores_report))?;
    write_scores_csv(&out.scores, &scores_report)?;
    Ok(out)
}

/// Writes sweep.csv for a tracking log; one row per threshold.
pub fn sweep_file(tracking: &Path, thresholds_w: &[f64], out: &Path) -> Result<()> {
    let records = read_tracking_csv(tracking)?;
    write_sweep_csv(out, &reserve_threshold_sweep(&records, thresholds_w)?)
}
