//! Experiment orchestration: configuration, the paired two-cell simulation
//! on a 4 s clock, file interchange and report emission.

mod artifacts;
mod replay;
mod run;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::climatectl::{EstimatorConfig, MpcConfig};
use crate::error::{Error, Result};
use crate::plantsim::{
    ForecastBias, HeaterSchedule, PlantParams, WeatherProfile, WeatherTrace, DAY_S,
};
use crate::regsignal::{
    downsample, load_signal_csv, synthetic_regd, triangle_wave, DelayKind, DelayModel,
    RegulationSignal,
};
use crate::regtrack::TrackerConfig;
use crate::scheduler::{ComfortSettings, SchedulerConfig, Tariff};

pub use artifacts::{
    combined_schedule, read_manifest, run_experiment, score_files, sweep_file, write_artifacts,
    write_hourly_csv, BenchmarkArtifacts, Manifest, RunArtifacts, ScoreOutputs, EFFICIENCY_HEADER,
    HOURLY_HEADER,
};
pub use replay::{replay_tracking, ReplayConfig, ReplayOutcome};
pub use run::{scheduling_problem, simulate, CellLog, Simulation};

/// Plant tick and level-3 cadence, s.
pub const TICK_S: f64 = 4.0;
/// Level-2 cadence and scheduler slot, s.
pub const SLOT_S: f64 = 900.0;
pub const SLOTS_PER_DAY: usize = 96;
pub const TICKS_PER_SLOT: usize = 225;
/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "REGFLEX_OUT_DIR";

/// Random seeds; all mandatory so that runs never depend on entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub weather: u64,
    pub heaters: u64,
    pub signal: u64,
    pub delay: u64,
    pub sensor: u64,
}

impl Seeds {
    /// Distinct seeds derived from one number.
    pub fn from_base(base: u64) -> Self {
        Self {
            weather: base,
            heaters: base.wrapping_add(1),
            signal: base.wrapping_add(2),
            delay: base.wrapping_add(3),
            sensor: base.wrapping_add(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeatherSource {
    Synthetic {
        #[serde(default)]
        profile: WeatherProfile,
    },
    /// Actual and forecast traces in forecast.csv format at the slot period.
    Files { actual: PathBuf, forecast: PathBuf },
}

impl Default for WeatherSource {
    fn default() -> Self {
        WeatherSource::Synthetic {
            profile: WeatherProfile::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSource {
    /// Seeded RegD-like signal at 2 s.
    #[default]
    Synthetic,
    /// Signal file (`t_s,w`), down-sampled to the plant tick.
    File { path: PathBuf },
    /// Zero-mean triangle wave at the plant tick.
    Triangle { cycle_s: f64 },
}

/// Delay model without its seed (taken from [`Seeds::delay`]). Unknown keys
/// are not rejected here because the kind is flattened into the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayConfig {
    #[serde(flatten)]
    pub kind: DelayKind,
    pub mean_s: f64,
    pub p95_s: f64,
    #[serde(default)]
    pub outlier_cap_s: Option<f64>,
}

impl Default for DelayConfig {
    fn default() -> Self {
        let m = DelayModel::field_default(0);
        Self {
            kind: m.kind,
            mean_s: m.mean_s,
            p95_s: m.p95_s,
            outlier_cap_s: m.outlier_cap_s,
        }
    }
}

impl DelayConfig {
    pub fn model(&self, seed: u64) -> DelayModel {
        DelayModel {
            kind: self.kind.clone(),
            mean_s: self.mean_s,
            p95_s: self.p95_s,
            seed,
            outlier_cap_s: self.outlier_cap_s,
        }
    }
}

/// What the benchmark cell does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkMode {
    /// Scheduled without reserves: minimum-energy operation.
    EnergyEfficient,
    /// Scheduled with the same reserves, but receives no signal.
    #[default]
    RegulationReady,
    /// Benchmark cell not simulated.
    Disabled,
}

/// Controllers use thermal parameters scaled by `factor` for the first
/// `days` days, then the plant's own parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchSchedule {
    pub factor: f64,
    pub days: usize,
}

impl Default for MismatchSchedule {
    fn default() -> Self {
        Self {
            factor: 1.0,
            days: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TariffConfig {
    pub energy_eur_kwh: f64,
    pub capacity_eur_kwh: f64,
}

impl Default for TariffConfig {
    fn default() -> Self {
        Self {
            energy_eur_kwh: 0.18,
            capacity_eur_kwh: 0.198,
        }
    }
}

impl TariffConfig {
    pub fn tariff(&self, slots: usize) -> Tariff {
        Tariff::flat(slots, self.energy_eur_kwh, self.capacity_eur_kwh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub room_c: f64,
    pub mass_c: f64,
    pub speed: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            room_c: 23.0,
            mass_c: 23.0,
            speed: 0.3,
        }
    }
}

fn one_day() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_noise() -> f64 {
    0.02
}

fn default_thresholds() -> Vec<f64> {
    vec![0.0, 25.0, 50.0, 75.0, 100.0, 125.0, 150.0, 175.0, 200.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Seeds,
    #[serde(default = "one_day")]
    pub days: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Regulation cell.
    #[serde(default)]
    pub plant: PlantParams,
    /// Benchmark cell; defaults to the regulation cell's parameters.
    #[serde(default)]
    pub plant_b: Option<PlantParams>,
    #[serde(default)]
    pub weather: WeatherSource,
    #[serde(default)]
    pub forecast_bias: ForecastBias,
    #[serde(default)]
    pub comfort: ComfortSettings,
    #[serde(default = "yes")]
    pub setback: bool,
    #[serde(default = "yes")]
    pub symmetric: bool,
    #[serde(default)]
    pub tariff: TariffConfig,
    #[serde(default)]
    pub heaters: HeaterSchedule,
    #[serde(default)]
    pub signal: SignalSource,
    #[serde(default)]
    pub delay: DelayConfig,
    #[serde(default)]
    pub benchmark: BenchmarkMode,
    #[serde(default)]
    pub mismatch: MismatchSchedule,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub initial: InitialState,
    /// Standard deviation of the room temperature sensor, °C.
    #[serde(default = "default_noise")]
    pub sensor_noise_c: f64,
    /// Commit zero capacities every day (baseline plans are kept).
    #[serde(default)]
    pub force_zero_reserves: bool,
    #[serde(default = "default_thresholds")]
    pub sweep_thresholds_w: Vec<f64>,
}

impl ExperimentConfig {
    /// Default experiment with seeds derived from `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seeds: Seeds::from_base(seed),
            days: 1,
            output_dir: None,
            plant: PlantParams::default(),
            plant_b: None,
            weather: WeatherSource::default(),
            forecast_bias: ForecastBias::default(),
            comfort: ComfortSettings::default(),
            setback: true,
            symmetric: true,
            tariff: TariffConfig::default(),
            heaters: HeaterSchedule::default(),
            signal: SignalSource::default(),
            delay: DelayConfig::default(),
            benchmark: BenchmarkMode::default(),
            mismatch: MismatchSchedule::default(),
            scheduler: SchedulerConfig::default(),
            mpc: MpcConfig::default(),
            estimator: EstimatorConfig::default(),
            tracker: TrackerConfig::default(),
            initial: InitialState::default(),
            sensor_noise_c: default_noise(),
            force_zero_reserves: false,
            sweep_thresholds_w: default_thresholds(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn plant_b(&self) -> &PlantParams {
        self.plant_b.as_ref().unwrap_or(&self.plant)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.days == 0 {
            return bad("days must be at least 1".into());
        }
        for (name, p) in [("plant", &self.plant), ("plant_b", self.plant_b())] {
            p.thermal
                .validate()
                .map_err(|m| Error::Config(format!("{name}.thermal: {m}")))?;
            if !p.fan.is_monotone() || !(p.fan.min_speed < p.fan.max_speed) {
                return bad(format!(
                    "{name}.fan: power curve must increase over the speed range"
                ));
            }
        }
        if !(self.mismatch.factor > 0.0) {
            return bad("mismatch.factor must be positive".into());
        }
        if !(self.sensor_noise_c >= 0.0) {
            return bad("sensor_noise_c must be non-negative".into());
        }
        if self.sweep_thresholds_w.windows(2).any(|w| !(w[0] <= w[1])) {
            return bad("sweep_thresholds_w must be ascending".into());
        }
        if self.scheduler.slot_s != SLOT_S || self.mpc.slot_s != SLOT_S {
            return bad(format!("slot length is fixed at {SLOT_S} s"));
        }
        let files: Vec<&PathBuf> = match (&self.weather, &self.signal) {
            (WeatherSource::Files { actual, forecast }, s) => {
                let mut v = vec![actual, forecast];
                if let SignalSource::File { path } = s {
                    v.push(path);
                }
                v
            }
            (_, SignalSource::File { path }) => vec![path],
            _ => Vec::new(),
        };
        for f in files {
            if !f.is_file() {
                return bad(format!("referenced file {} does not exist", f.display()));
            }
        }
        self.delay
            .model(0)
            .sampler()
            .map_err(|e| Error::Config(format!("delay: {e}")))?;
        Ok(())
    }

    /// Output directory: the environment override, else the configured one,
    /// else `fallback`.
    pub fn resolve_output_dir(&self, fallback: &Path) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self
                .output_dir
                .clone()
                .unwrap_or_else(|| fallback.to_path_buf()),
        }
    }

    pub fn weather_trace(&self) -> Result<WeatherTrace> {
        match &self.weather {
            WeatherSource::Synthetic { profile } => Ok(WeatherTrace::synthetic(
                self.days,
                SLOT_S,
                profile,
                &self.forecast_bias,
                self.seeds.weather,
            )),
            WeatherSource::Files { actual, forecast } => {
                let read = |p: &Path| -> Result<Vec<_>> {
                    let rows = crate::plantsim::read_forecast_csv(p)?;
                    for (i, (t, _)) in rows.iter().enumerate() {
                        if (t - i as f64 * SLOT_S).abs() > 1e-6 {
                            return Err(Error::Config(format!(
                                "{}: row {i} at t={t}, expected {}",
                                p.display(),
                                i as f64 * SLOT_S
                            )));
                        }
                    }
                    Ok(rows.into_iter().map(|(_, w)| w).collect())
                };
                let (a, f) = (read(actual)?, read(forecast)?);
                let need = self.days * SLOTS_PER_DAY;
                if a.len() < need || f.len() < need {
                    return Err(Error::Config(format!(
                        "weather files cover {} / {} slots, {need} needed",
                        a.len(),
                        f.len()
                    )));
                }
                Ok(WeatherTrace {
                    slot_s: SLOT_S,
                    actual: a[..need].to_vec(),
                    forecast: f[..need].to_vec(),
                })
            }
        }
    }

    /// Regulation signal at the plant tick covering the run.
    pub fn signal(&self) -> Result<RegulationSignal> {
        let raw = match &self.signal {
            SignalSource::Synthetic => {
                synthetic_regd(self.days as f64 * DAY_S, 2.0, self.seeds.signal)?
            }
            SignalSource::File { path } => load_signal_csv(path)?,
            SignalSource::Triangle { cycle_s } => {
                triangle_wave(self.days as f64 * DAY_S, TICK_S, *cycle_s)?
            }
        };
        if raw.period_s() >= TICK_S {
            if (raw.period_s() - TICK_S).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "signal period {} s is coarser than the {TICK_S} s tick",
                    raw.period_s()
                )));
            }
            return Ok(raw);
        }
        downsample(&raw, TICK_S)
    }
}
