//! Day-ahead robust reserve scheduling.
//!
//! For every slot the schedule fixes a baseline fan power `P_b` and, per
//! market hour, up/down capacities `R_u`/`R_d`. Robustness is enforced on
//! two envelope trajectories: a warm one with the fan held at the power
//! `P_b - R_u` (signal pinned at -1) and a cold one at `P_b + R_d` (signal
//! pinned at +1). Every admissible signal trajectory lies between them, so
//! comfort on both envelopes guarantees comfort under regulation.
//!
//! The fan curve enters through its piecewise-affine interpolation. The warm
//! envelope constraint `P(m-) <= P_b - R_u` is convex; the cold envelope
//! constraint `P(m+) >= P_b + R_d` is not. On a flow grid it is solved
//! exactly by branch-and-bound; with continuous flows it is replaced by a
//! supporting line of the curve, re-selected around each iterate.
//! Cooling by supply air is linearized around a reference room temperature
//! per slot, refined by a few sequential passes.

mod solve;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio::{self, num};
use crate::error::{Error, Result};
use crate::plantsim::{FanModel, ThermalParams, WeatherSample, DAY_S};

pub use solve::schedule_reserves;

pub const RESERVE_HEADER: [&str; 3] = ["hour_index", "R_u_W", "R_d_W"];
pub const SCHEDULE_HEADER: [&str; 3] = ["slot_index", "P_b_W", "m_air_kg_s"];

/// Per-slot comfort bounds on the zone temperature at the end of the slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ComfortCalendar {
    pub lower_c: Vec<f64>,
    pub upper_c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComfortSettings {
    pub work_start_h: f64,
    pub work_end_h: f64,
    pub lower_c: f64,
    pub upper_c: f64,
    pub setback_lower_c: f64,
    pub setback_upper_c: f64,
}

impl Default for ComfortSettings {
    fn default() -> Self {
        Self {
            work_start_h: 8.0,
            work_end_h: 18.0,
            lower_c: 21.0,
            upper_c: 25.0,
            setback_lower_c: 12.0,
            setback_upper_c: 35.0,
        }
    }
}

impl ComfortCalendar {
    pub fn new(lower_c: Vec<f64>, upper_c: Vec<f64>) -> Result<Self> {
        if lower_c.len() != upper_c.len() {
            return Err(Error::Misaligned("comfort bound lengths differ".into()));
        }
        if let Some(k) = (0..lower_c.len()).find(|&k| lower_c[k] > upper_c[k]) {
            return Err(Error::InvalidArgument(format!(
                "comfort band inverted at slot {k}"
            )));
        }
        Ok(Self { lower_c, upper_c })
    }

    /// Calendar for `slots` slots starting at `start_s`. Working hours use
    /// the comfort band; other hours use it too unless `setback` is set.
    pub fn daily(
        settings: &ComfortSettings,
        start_s: f64,
        slots: usize,
        slot_s: f64,
        setback: bool,
    ) -> Self {
        let mut lower = Vec::with_capacity(slots);
        let mut upper = Vec::with_capacity(slots);
        for k in 0..slots {
            // Band of the slot's own interval; the bound applies to its end state.
            let h = ((start_s + (k as f64 + 0.5) * slot_s) % DAY_S) / 3600.0;
            let working = h >= settings.work_start_h && h < settings.work_end_h;
            if working || !setback {
                lower.push(settings.lower_c);
                upper.push(settings.upper_c);
            } else {
                lower.push(settings.setback_lower_c);
                upper.push(settings.setback_upper_c);
            }
        }
        Self {
            lower_c: lower,
            upper_c: upper,
        }
    }

    pub fn len(&self) -> usize {
        self.lower_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower_c.is_empty()
    }
}

/// Energy price and capacity payment per slot, €/kWh.
#[derive(Debug, Clone, PartialEq)]
pub struct Tariff {
    pub energy_eur_kwh: Vec<f64>,
    pub capacity_eur_kwh: Vec<f64>,
}

impl Tariff {
    pub fn flat(slots: usize, energy: f64, capacity: f64) -> Self {
        Self {
            energy_eur_kwh: vec![energy; slots],
            capacity_eur_kwh: vec![capacity; slots],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            energy_eur_kwh: self.energy_eur_kwh.iter().map(|c| c * factor).collect(),
            capacity_eur_kwh: self.capacity_eur_kwh.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Admissible air flows for the envelope trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowDomain {
    /// Any flow in the configured band.
    Continuous,
    /// Only the listed flows (kg/s, ascending, inside the band).
    Grid(Vec<f64>),
}

/// How the supply-air cooling term is linearized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linearization {
    /// Reference room temperatures per slot for the warm and cold envelopes,
    /// used as given.
    Fixed { warm_c: Vec<f64>, cold_c: Vec<f64> },
    /// Start from the comfort mid-band and re-linearize around each solution.
    Sequential { passes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub slot_s: f64,
    pub slots_per_block: usize,
    pub flow_lo_kg_s: f64,
    pub flow_hi_kg_s: f64,
    pub pwa_segments: usize,
    pub sat_setpoint_c: f64,
    pub zero_mean: bool,
    pub domain: FlowDomain,
    pub linearization: Linearization,
    pub tie_break: bool,
    pub max_nodes: usize,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            slot_s: 900.0,
            slots_per_block: 4,
            flow_lo_kg_s: 0.15,
            flow_hi_kg_s: 1.0,
            pwa_segments: 4,
            sat_setpoint_c: 17.0,
            zero_mean: false,
            domain: FlowDomain::Continuous,
            linearization: Linearization::Sequential { passes: 2 },
            tie_break: true,
            max_nodes: 4000,
        }
    }
}

/// Everything the day-ahead solve depends on.
#[derive(Debug, Clone)]
pub struct SchedulingProblem {
    pub thermal: ThermalParams,
    pub fan: FanModel,
    pub forecast: Vec<WeatherSample>,
    pub internal_gain_w: Vec<f64>,
    pub calendar: ComfortCalendar,
    pub tariff: Tariff,
    pub symmetric: bool,
    /// Room and mass temperature at the start of the first slot.
    pub initial_c: [f64; 2],
    pub config: SchedulerConfig,
}

impl SchedulingProblem {
    pub fn slots(&self) -> usize {
        self.forecast.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.slots();
        if n == 0 {
            return Err(Error::EmptySeries);
        }
        let cfg = &self.config;
        if cfg.slots_per_block == 0 || n % cfg.slots_per_block != 0 {
            return Err(Error::InvalidArgument(format!(
                "{n} slots do not split into blocks of {}",
                cfg.slots_per_block
            )));
        }
        for (name, len) in [
            ("internal gains", self.internal_gain_w.len()),
            ("comfort calendar", self.calendar.len()),
            ("energy prices", self.tariff.energy_eur_kwh.len()),
            ("capacity prices", self.tariff.capacity_eur_kwh.len()),
        ] {
            if len != n {
                return Err(Error::Misaligned(format!(
                    "{name}: {len} values for {n} slots"
                )));
            }
        }
        if self
            .tariff
            .energy_eur_kwh
            .iter()
            .chain(&self.tariff.capacity_eur_kwh)
            .any(|p| !(*p >= 0.0))
        {
            return Err(Error::InvalidArgument("prices must be non-negative".into()));
        }
        if !(cfg.flow_lo_kg_s > 0.0 && cfg.flow_hi_kg_s > cfg.flow_lo_kg_s) {
            return Err(Error::InvalidArgument(
                "scheduler flow band is empty".into(),
            ));
        }
        if let FlowDomain::Grid(g) = &cfg.domain {
            let ok = !g.is_empty()
                && g.windows(2).all(|w| w[1] > w[0])
                && g[0] >= cfg.flow_lo_kg_s - 1e-12
                && g[g.len() - 1] <= cfg.flow_hi_kg_s + 1e-12;
            if !ok {
                return Err(Error::InvalidArgument(
                    "flow grid must be ascending and inside the flow band".into(),
                ));
            }
        }
        if let Linearization::Fixed { warm_c, cold_c } = &cfg.linearization {
            if warm_c.len() != n || cold_c.len() != n {
                return Err(Error::Misaligned("linearization points".into()));
            }
        }
        self.thermal.validate().map_err(Error::InvalidArgument)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HourReserve {
    pub r_up_w: f64,
    pub r_down_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSlot {
    pub p_b_w: f64,
    pub m_air_kg_s: f64,
}

/// Committed capacities per market hour and the baseline plan per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ReserveSchedule {
    pub slots_per_block: usize,
    pub hours: Vec<HourReserve>,
    pub slots: Vec<BaselineSlot>,
}

impl ReserveSchedule {
    /// A schedule with zero capacities and the given baseline.
    pub fn zero(hours: usize, slots_per_block: usize, slots: Vec<BaselineSlot>) -> Self {
        Self {
            slots_per_block,
            hours: vec![
                HourReserve {
                    r_up_w: 0.0,
                    r_down_w: 0.0
                };
                hours
            ],
            slots,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.hours.iter().all(|h| h.r_up_w == h.r_down_w)
    }

    pub fn hour_of_slot(&self, slot: usize) -> usize {
        slot / self.slots_per_block
    }

    pub fn reserve_for_slot(&self, slot: usize) -> HourReserve {
        self.hours
            .get(self.hour_of_slot(slot))
            .copied()
            .unwrap_or(HourReserve {
                r_up_w: 0.0,
                r_down_w: 0.0,
            })
    }

    pub fn total_up_w(&self) -> f64 {
        self.hours.iter().map(|h| h.r_up_w).sum()
    }

    pub fn total_down_w(&self) -> f64 {
        self.hours.iter().map(|h| h.r_down_w).sum()
    }

    /// Mean of (R_u + R_d) over hours, W.
    pub fn average_capacity_w(&self) -> f64 {
        if self.hours.is_empty() {
            return 0.0;
        }
        (self.total_up_w() + self.total_down_w()) / self.hours.len() as f64
    }

    pub fn check_invariants(&self, fan: &FanModel, lo_flow: f64, hi_flow: f64) -> Result<()> {
        let tol = 1e-6;
        for (h, r) in self.hours.iter().enumerate() {
            if r.r_up_w < 0.0 || r.r_down_w < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative capacity in hour {h}"
                )));
            }
        }
        for (k, s) in self.slots.iter().enumerate() {
            let r = self.reserve_for_slot(k);
            if s.p_b_w - r.r_up_w < fan.fan_power(lo_flow) - tol
                || s.p_b_w + r.r_down_w > fan.fan_power(hi_flow) + tol
            {
                return Err(Error::InvalidArgument(format!(
                    "slot {k} capacities not deliverable around baseline {}",
                    s.p_b_w
                )));
            }
        }
        Ok(())
    }
}

pub fn write_reserve_csv(path: &Path, schedule: &ReserveSchedule) -> Result<()> {
    csvio::write_rows(
        path,
        &RESERVE_HEADER,
        schedule
            .hours
            .iter()
            .enumerate()
            .map(|(h, r)| vec![h.to_string(), num(r.r_up_w), num(r.r_down_w)]),
    )
}

pub fn write_schedule_csv(path: &Path, schedule: &ReserveSchedule) -> Result<()> {
    csvio::write_rows(
        path,
        &SCHEDULE_HEADER,
        schedule
            .slots
            .iter()
            .enumerate()
            .map(|(k, s)| vec![k.to_string(), num(s.p_b_w), num(s.m_air_kg_s)]),
    )
}

/// Reads hourly capacities. Rows must be indexed 0, 1, 2, ...
pub fn read_reserve_csv(path: &Path) -> Result<Vec<HourReserve>> {
    let rows = csvio::read_rows(path, &RESERVE_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        check_index(path, row.line, row.usize(path, 0)?, i)?;
        let (up, down) = (row.f64(path, 1)?, row.f64(path, 2)?);
        for v in [up, down] {
            if v < 0.0 {
                return Err(Error::OutOfRange {
                    path: path.to_path_buf(),
                    line: row.line,
                    value: v,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
        }
        out.push(HourReserve {
            r_up_w: up,
            r_down_w: down,
        });
    }
    Ok(out)
}

pub fn read_schedule_csv(path: &Path) -> Result<Vec<BaselineSlot>> {
    let rows = csvio::read_rows(path, &SCHEDULE_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        check_index(path, row.line, row.usize(path, 0)?, i)?;
        out.push(BaselineSlot {
            p_b_w: row.f64(path, 1)?,
            m_air_kg_s: row.f64(path, 2)?,
        });
    }
    Ok(out)
}

fn check_index(path: &Path, line: u64, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(csvio::parse_err(
            path,
            line,
            format!("index {found}, expected {expected}"),
        ));
    }
    Ok(())
}

/// Reads reserve.csv and schedule.csv back into one schedule.
pub fn read_reserve_schedule(
    reserve_path: &Path,
    schedule_path: &Path,
    slots_per_block: usize,
) -> Result<ReserveSchedule> {
    let hours = read_reserve_csv(reserve_path)?;
    let slots = read_schedule_csv(schedule_path)?;
    if slots.len() != hours.len() * slots_per_block {
        return Err(Error::Misaligned(format!(
            "{} slots for {} hours",
            slots.len(),
            hours.len()
        )));
    }
    Ok(ReserveSchedule {
        slots_per_block,
        hours,
        slots,
    })
}

/// Solver result: the schedule plus the quantities behind it.
#[derive(Debug, Clone)]
pub struct ScheduleOutcome {
    pub schedule: ReserveSchedule,
    /// Revenue minus energy cost under the piecewise-affine curve, €.
    pub objective_eur: f64,
    pub revenue_eur: f64,
    pub energy_cost_eur: f64,
    /// Room temperature at the end of each slot on the warm / cold envelope.
    pub warm_envelope_c: Vec<f64>,
    pub cold_envelope_c: Vec<f64>,
    /// Envelope flows (kg/s) behind the two trajectories.
    pub warm_flow_kg_s: Vec<f64>,
    pub cold_flow_kg_s: Vec<f64>,
    pub nodes: usize,
    pub passes: usize,
}
