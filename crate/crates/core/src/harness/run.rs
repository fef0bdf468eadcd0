use std::time::Instant;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{BenchmarkMode, ExperimentConfig, SLOTS_PER_DAY, SLOT_S, TICKS_PER_SLOT, TICK_S};
use crate::climatectl::{
    kf_update, solve_mpc, EstimatorState, MpcPlan, MpcProblem, Setpoint, SlotInputs,
};
use crate::error::{Error, Result};
use crate::plantsim::{
    step_plant, HeaterProcess, Measurement, PlantParams, PlantState, ThermalParams, WeatherTrace,
    DAY_S,
};
use crate::regsignal::{RegulationSignal, SignalHold};
use crate::regtrack::{desired_power, track_step, TrackInput, TrackerState, TrackingRecord};
use crate::scheduler::{
    schedule_reserves, BaselineSlot, ComfortCalendar, HourReserve, ReserveSchedule,
    SchedulingProblem,
};

/// Everything one cell produced.
#[derive(Debug, Clone, Default)]
pub struct CellLog {
    /// Plant measurement at the end of every slot.
    pub measurements: Vec<Measurement>,
    /// Cumulative [fan Wh, cooling Wh, cooling gpm·°F·h, chiller Wh] at every
    /// slot boundary, starting with zeros at t = 0.
    pub cumulative: Vec<[f64; 4]>,
    /// Mean room temperature over each slot, °C.
    pub slot_mean_room_c: Vec<f64>,
    /// Extremes of the tick-level room temperature within each slot, °C.
    pub slot_max_room_c: Vec<f64>,
    pub slot_min_room_c: Vec<f64>,
    /// Applied setpoint of every MPC solve.
    pub setpoints: Vec<Setpoint>,
    pub tracking: Vec<TrackingRecord>,
    /// Estimator innovations, one per slot after the first.
    pub innovations: Vec<f64>,
    /// One-slot-ahead predicted room temperature for each slot end.
    pub predicted_room_c: Vec<f64>,
    pub mpc_solves: usize,
    pub mpc_relaxed: usize,
    pub reserve_conflicts: usize,
    /// MPC wall time per solve with its horizon (not part of any artifact).
    pub mpc_times: Vec<(usize, f64)>,
}

impl CellLog {
    /// Energy summary over slots [a, b).
    pub fn summary(&self, a: usize, b: usize) -> crate::perfmetrics::RunSummary {
        let (ca, cb) = (self.cumulative[a], self.cumulative[b]);
        let temps = &self.slot_mean_room_c[a..b];
        crate::perfmetrics::RunSummary {
            t_start_s: a as f64 * SLOT_S,
            t_end_s: b as f64 * SLOT_S,
            fan_kwh: (cb[0] - ca[0]) / 1000.0,
            cooling_kwh: (cb[1] - ca[1]) / 1000.0,
            cooling_gpm_f_h: cb[2] - ca[2],
            chiller_kwh: (cb[3] - ca[3]) / 1000.0,
            mean_room_c: temps.iter().sum::<f64>() / temps.len().max(1) as f64,
        }
    }

    pub fn slots(&self) -> usize {
        self.slot_mean_room_c.len()
    }

    /// Slots whose tick-level room temperature exceeded the actual upper
    /// comfort bound, with the worst excess in °C.
    pub fn upper_violations(&self, cfg: &ExperimentConfig) -> Vec<(usize, f64)> {
        let days = self.slots() / SLOTS_PER_DAY;
        (0..days)
            .flat_map(|d| {
                let cal = day_calendar(cfg, d);
                (0..SLOTS_PER_DAY).map(move |s| (d * SLOTS_PER_DAY + s, cal.upper_c[s]))
            })
            .filter_map(|(k, upper)| {
                let excess = self.slot_max_room_c[k] - upper;
                (excess > 0.0).then_some((k, excess))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub weather: WeatherTrace,
    pub signal: RegulationSignal,
    /// Committed schedule of each day.
    pub schedules: Vec<ReserveSchedule>,
    /// Day-ahead objective per day, €.
    pub schedule_objectives: Vec<f64>,
    pub schedule_fallbacks: usize,
    pub cell_a: CellLog,
    pub cell_b: Option<CellLog>,
    pub ticks: usize,
}

impl Simulation {
    /// Hourly capacities over the whole run.
    pub fn hourly_reserves(&self) -> Vec<HourReserve> {
        self.schedules
            .iter()
            .flat_map(|s| s.hours.iter().copied())
            .collect()
    }

    pub fn schedule_commits(&self) -> usize {
        self.schedules.len()
    }
}

/// How a cell responds to the committed schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Regulating,
    RegulationReady,
    EnergyEfficient,
}

struct Cell<'a> {
    role: Role,
    params: &'a PlantParams,
    plant: PlantState,
    est: EstimatorState,
    tracker: TrackerState,
    heater: HeaterProcess,
    sensor: ChaCha8Rng,
    plan: Option<MpcPlan>,
    prior_room_c: f64,
    log: CellLog,
    // Slot accumulators.
    acc_flow: f64,
    acc_sat: f64,
    acc_gain: f64,
    acc_room: f64,
    max_room: f64,
    min_room: f64,
}

impl<'a> Cell<'a> {
    fn new(role: Role, params: &'a PlantParams, cfg: &ExperimentConfig) -> Self {
        let init = &cfg.initial;
        let plant = PlantState::new(params, init.room_c, init.mass_c, init.speed);
        let mut log = CellLog::default();
        log.cumulative.push([0.0; 4]);
        Self {
            role,
            params,
            est: EstimatorState::new([init.room_c, init.mass_c], &cfg.estimator),
            tracker: TrackerState::new(&params.fan, &cfg.tracker, init.speed),
            heater: HeaterProcess::new(cfg.heaters.clone(), cfg.seeds.heaters),
            sensor: ChaCha8Rng::seed_from_u64(cfg.seeds.sensor),
            plant,
            plan: None,
            prior_room_c: init.room_c,
            log,
            acc_flow: 0.0,
            acc_sat: 0.0,
            acc_gain: 0.0,
            acc_room: 0.0,
            max_room: f64::NEG_INFINITY,
            min_room: f64::INFINITY,
        }
    }

    fn snapshot(&self) -> String {
        let p = &self.plant;
        format!(
            "T_room={} T_mass={} speed={} flow={} T_sat={} tank={} stage={} valve={} est=[{}, {}]",
            p.t_room_c,
            p.t_mass_c,
            p.speed,
            p.flow_kg_s,
            p.chilled.t_sat_c,
            p.chilled.tank_c,
            p.chilled.stage,
            p.chilled.valve,
            self.est.x[0],
            self.est.x[1]
        )
    }

    fn fault(&self, module: &'static str, err: &Error) -> Error {
        Error::SimulationFault {
            t_s: self.plant.t,
            module,
            detail: format!("{err}; state: {}", self.snapshot()),
        }
    }

    fn measure_room(&mut self, noise_c: f64) -> f64 {
        let n = if noise_c > 0.0 {
            Normal::new(0.0, noise_c)
                .expect("valid std")
                .sample(&mut self.sensor)
        } else {
            0.0
        };
        self.plant.t_room_c + n
    }
}

/// Controllers' thermal model on `day`.
fn controller_model(cfg: &ExperimentConfig, params: &PlantParams, day: usize) -> ThermalParams {
    if day < cfg.mismatch.days && cfg.mismatch.factor != 1.0 {
        params.thermal.mismatched(cfg.mismatch.factor)
    } else {
        params.thermal
    }
}

fn nominal_gains(cfg: &ExperimentConfig, first_slot: usize, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            cfg.heaters
                .slot_mean_w((first_slot + i) as f64 * SLOT_S, SLOT_S)
        })
        .collect()
}

fn day_calendar(cfg: &ExperimentConfig, day: usize) -> ComfortCalendar {
    ComfortCalendar::daily(
        &cfg.comfort,
        day as f64 * DAY_S,
        SLOTS_PER_DAY,
        SLOT_S,
        cfg.setback,
    )
}

/// Comfort band both control levels plan against: the actual upper bound
/// less the MPC's comfort margin. Scheduling against the actual bound would
/// commit reserves the MPC cannot deliver without leaving its own band.
fn planning_calendar(cfg: &ExperimentConfig, day: usize) -> ComfortCalendar {
    let mut cal = day_calendar(cfg, day);
    for (u, &l) in cal.upper_c.iter_mut().zip(&cal.lower_c) {
        *u = (*u - cfg.mpc.comfort_margin_c).max(l);
    }
    cal
}

/// Day-ahead problem for `day` starting from the predicted midnight state.
pub fn scheduling_problem(
    cfg: &ExperimentConfig,
    weather: &WeatherTrace,
    day: usize,
    initial_c: [f64; 2],
) -> SchedulingProblem {
    let first = day * SLOTS_PER_DAY;
    SchedulingProblem {
        thermal: controller_model(cfg, &cfg.plant, day),
        fan: cfg.plant.fan.clone(),
        forecast: weather.forecast_slots(first, SLOTS_PER_DAY).to_vec(),
        internal_gain_w: nominal_gains(cfg, first, SLOTS_PER_DAY),
        calendar: planning_calendar(cfg, day),
        tariff: cfg.tariff.tariff(SLOTS_PER_DAY),
        symmetric: cfg.symmetric,
        initial_c,
        config: cfg.scheduler.clone(),
    }
}

fn commit_schedule(
    cfg: &ExperimentConfig,
    weather: &WeatherTrace,
    day: usize,
    initial_c: [f64; 2],
) -> (ReserveSchedule, f64, bool) {
    let problem = scheduling_problem(cfg, weather, day, initial_c);
    let started = Instant::now();
    let result = schedule_reserves(&problem);
    debug!("day {day} schedule solved in {:?}", started.elapsed());
    let spb = cfg.scheduler.slots_per_block;
    let hours = SLOTS_PER_DAY / spb;
    match result {
        Ok(out) => {
            let mut s = out.schedule;
            if cfg.force_zero_reserves {
                s = ReserveSchedule::zero(hours, spb, s.slots);
            }
            (s, out.objective_eur, false)
        }
        Err(e) => {
            warn!("day {day}: no reserves committed ({e})");
            let base = BaselineSlot {
                p_b_w: cfg.plant.fan.fan_power(cfg.scheduler.flow_lo_kg_s),
                m_air_kg_s: cfg.scheduler.flow_lo_kg_s,
            };
            (
                ReserveSchedule::zero(hours, spb, vec![base; SLOTS_PER_DAY]),
                0.0,
                true,
            )
        }
    }
}

/// Runs the full experiment in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    cfg.validate()?;
    let weather = cfg.weather_trace()?;
    let signal = cfg.signal()?;
    let mut hold = SignalHold::from_signal(&signal, &cfg.delay.model(cfg.seeds.delay))?;

    let mut cells = vec![Cell::new(Role::Regulating, &cfg.plant, cfg)];
    match cfg.benchmark {
        BenchmarkMode::RegulationReady => {
            cells.push(Cell::new(Role::RegulationReady, cfg.plant_b(), cfg))
        }
        BenchmarkMode::EnergyEfficient => {
            cells.push(Cell::new(Role::EnergyEfficient, cfg.plant_b(), cfg))
        }
        BenchmarkMode::Disabled => {}
    }

    let mut schedules: Vec<ReserveSchedule> = Vec::with_capacity(cfg.days);
    let mut objectives = Vec::with_capacity(cfg.days);
    let mut fallbacks = 0;
    let init = [cfg.initial.room_c, cfg.initial.mass_c];
    let (s, obj, fb) = commit_schedule(cfg, &weather, 0, init);
    schedules.push(s);
    objectives.push(obj);
    fallbacks += fb as usize;

    let mut ticks = 0usize;
    for day in 0..cfg.days {
        for slot in 0..SLOTS_PER_DAY {
            let k = day * SLOTS_PER_DAY + slot;
            let t0 = k as f64 * SLOT_S;
            for cell in cells.iter_mut() {
                slot_start(cfg, &weather, &schedules[day], cell, day, slot)?;
            }
            if slot == SLOTS_PER_DAY / 2 && day + 1 < cfg.days {
                // Noon: commit tomorrow from the regulation cell's predicted
                // midnight state.
                let plan = cells[0]
                    .plan
                    .as_ref()
                    .expect("plan exists after slot start");
                // A slack-relaxed plan can end outside tomorrow's band; the
                // MPC steers back into it, so plan from the band's edge.
                let next = planning_calendar(cfg, day + 1);
                let room = *plan.room_c.last().expect("non-empty plan");
                let x = [
                    room.clamp(next.lower_c[0], next.upper_c[0]),
                    *plan.mass_c.last().expect("non-empty plan"),
                ];
                let (s, obj, fb) = commit_schedule(cfg, &weather, day + 1, x);
                schedules.push(s);
                objectives.push(obj);
                fallbacks += fb as usize;
            }
            for i in 0..TICKS_PER_SLOT {
                let t = t0 + i as f64 * TICK_S;
                let w_ref = signal.value_at(t);
                let w_seen = hold.value_at(t);
                for cell in cells.iter_mut() {
                    tick(cfg, &weather, &schedules[day], cell, slot, t, w_ref, w_seen)?;
                }
                ticks += 1;
            }
            for cell in cells.iter_mut() {
                slot_end(cell);
            }
        }
    }
    let mut logs = cells.into_iter().map(|c| c.log);
    let cell_a = logs.next().expect("regulation cell");
    Ok(Simulation {
        weather,
        signal,
        schedules,
        schedule_objectives: objectives,
        schedule_fallbacks: fallbacks,
        cell_a,
        cell_b: logs.next(),
        ticks,
    })
}

fn slot_start(
    cfg: &ExperimentConfig,
    weather: &WeatherTrace,
    schedule: &ReserveSchedule,
    cell: &mut Cell<'_>,
    day: usize,
    slot: usize,
) -> Result<()> {
    let k = day * SLOTS_PER_DAY + slot;
    let model = controller_model(cfg, cell.params, day);
    if k > 0 {
        let n = TICKS_PER_SLOT as f64;
        let inputs = SlotInputs {
            flow_kg_s: cell.acc_flow / n,
            t_sat_c: cell.acc_sat / n,
            weather: weather.actual[k - 1],
            gain_w: cell.acc_gain / n,
        };
        let measured = cell.measure_room(cfg.sensor_noise_c);
        let est = kf_update(&cell.est, measured, &model, &inputs, SLOT_S)
            .map_err(|e| cell.fault("climatectl", &e))?;
        cell.log.innovations.push(est.innovation);
        cell.log.predicted_room_c.push(cell.prior_room_c);
        cell.est = est;
    }
    cell.acc_flow = 0.0;
    cell.acc_sat = 0.0;
    cell.acc_gain = 0.0;
    cell.acc_room = 0.0;
    cell.max_room = f64::NEG_INFINITY;
    cell.min_room = f64::INFINITY;

    let n = SLOTS_PER_DAY - slot;
    let calendar = day_calendar(cfg, day);
    let reserves: Vec<HourReserve> = (slot..SLOTS_PER_DAY)
        .map(|s| match cell.role {
            Role::EnergyEfficient => HourReserve::default(),
            _ => schedule.reserve_for_slot(s),
        })
        .collect();
    // Linearize around the previous plan, shifted by one slot.
    let t_ref = cell
        .plan
        .as_ref()
        .filter(|p| p.room_c.len() == n + 1)
        .map(|p| p.midpoints(cell.est.x[0])[1..].to_vec());
    let problem = MpcProblem {
        thermal: model,
        fan: cell.params.fan.clone(),
        forecast: weather.forecast_slots(k, n).to_vec(),
        internal_gain_w: nominal_gains(cfg, k, n),
        lower_c: calendar.lower_c[slot..].to_vec(),
        upper_c: calendar.upper_c[slot..].to_vec(),
        energy_eur_kwh: vec![cfg.tariff.energy_eur_kwh; n],
        reserves,
        flow_lo_kg_s: cfg.scheduler.flow_lo_kg_s,
        flow_hi_kg_s: cfg.scheduler.flow_hi_kg_s,
        t_ref_c: t_ref,
        config: cfg.mpc.clone(),
    };
    let started = Instant::now();
    let plan = solve_mpc(&problem, &cell.est).map_err(|e| cell.fault("climatectl", &e))?;
    let secs = started.elapsed().as_secs_f64();
    debug!("MPC slot {k} horizon {n}: {secs:.4} s");
    cell.log.mpc_times.push((n, secs));
    cell.log.mpc_solves += 1;
    cell.log.mpc_relaxed += plan.relaxed as usize;
    cell.log.reserve_conflicts += plan.reserve_conflict as usize;
    cell.log.setpoints.push(plan.setpoints(k)[0]);
    cell.prior_room_c = plan.room_c[0];
    cell.plan = Some(plan);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn tick(
    cfg: &ExperimentConfig,
    weather: &WeatherTrace,
    schedule: &ReserveSchedule,
    cell: &mut Cell<'_>,
    slot: usize,
    t: f64,
    w_ref: f64,
    w_seen: f64,
) -> Result<()> {
    let fan = &cell.params.fan;
    let (w_ref, w_seen, r) = match cell.role {
        Role::Regulating => (w_ref, w_seen, schedule.reserve_for_slot(slot)),
        Role::RegulationReady => (0.0, 0.0, schedule.reserve_for_slot(slot)),
        Role::EnergyEfficient => (0.0, 0.0, HourReserve::default()),
    };
    let p_b = cell.plan.as_ref().expect("plan exists").first_power_w();
    let (p_min, p_max) = (fan.min_power(), fan.max_power());
    let seen = desired_power(p_b, w_seen, r.r_up_w, r.r_down_w, p_min, p_max);
    let reference = desired_power(p_b, w_ref, r.r_up_w, r.r_down_w, p_min, p_max);
    let p_f = cell.plant.fan_power_w;
    cell.tracker = track_step(
        &cell.tracker,
        &TrackInput {
            p_d_w: seen.p_d_w,
            p_f_w: p_f,
            r_u_w: r.r_up_w,
            r_d_w: r.r_down_w,
        },
        fan,
        &cfg.tracker,
    );
    cell.log.tracking.push(TrackingRecord::new(
        t,
        w_ref,
        p_b,
        r.r_up_w,
        r.r_down_w,
        reference.p_d_w,
        p_f,
        cell.tracker.mode,
    ));
    let gain = cell.heater.gain_w(t);
    let next = step_plant(
        cell.params,
        &cell.plant,
        cell.tracker.last_cmd,
        weather.actual_at(t),
        gain,
        TICK_S,
    )?;
    cell.plant = next;
    cell.acc_flow += cell.plant.flow_kg_s;
    cell.acc_sat += cell.plant.t_sat_c();
    cell.acc_gain += gain;
    cell.acc_room += cell.plant.t_room_c;
    cell.max_room = cell.max_room.max(cell.plant.t_room_c);
    cell.min_room = cell.min_room.min(cell.plant.t_room_c);
    Ok(())
}

fn slot_end(cell: &mut Cell<'_>) {
    let p = &cell.plant;
    cell.log.measurements.push(p.measurement());
    cell.log.cumulative.push([
        p.fan_energy_wh,
        p.cooling_energy_wh,
        p.cooling_gpm_f_h,
        p.chiller_energy_wh,
    ]);
    cell.log
        .slot_mean_room_c
        .push(cell.acc_room / TICKS_PER_SLOT as f64);
    cell.log.slot_max_room_c.push(cell.max_room);
    cell.log.slot_min_room_c.push(cell.min_room);
}
