//! Level-2 room climate control: a Kalman filter on the two-state zone model
//! and a reducing-horizon MPC that re-optimizes the air-flow setpoints every
//! slot until midnight while keeping the committed reserves deliverable.

use std::path::Path;

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::csvio::{self, num};
use crate::error::{Error, Result};
use crate::linmodel::{solve_nominal, NominalSpec, SlotDynamics};
use crate::plantsim::{FanModel, ThermalInputs, ThermalParams, WeatherSample};
use crate::scheduler::HourReserve;

pub const SETPOINT_HEADER: [&str; 3] = ["slot_index", "m_air_kg_s", "P_b_W"];

/// Kalman filter state for the room / mass temperatures. Only the room
/// temperature is measured.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
    /// Process noise covariance per update.
    pub q: Matrix2<f64>,
    /// Measurement noise variance, °C².
    pub r: f64,
    /// Innovation of the last correction, °C.
    pub innovation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub initial_std_room_c: f64,
    pub initial_std_mass_c: f64,
    pub process_std_room_c: f64,
    pub process_std_mass_c: f64,
    pub measurement_std_c: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            initial_std_room_c: 0.5,
            initial_std_mass_c: 1.0,
            process_std_room_c: 0.1,
            process_std_mass_c: 0.03,
            measurement_std_c: 0.05,
        }
    }
}

impl EstimatorState {
    pub fn new(x0: [f64; 2], cfg: &EstimatorConfig) -> Self {
        Self {
            x: Vector2::new(x0[0], x0[1]),
            p: Matrix2::from_diagonal(&Vector2::new(
                cfg.initial_std_room_c.powi(2),
                cfg.initial_std_mass_c.powi(2),
            )),
            q: Matrix2::from_diagonal(&Vector2::new(
                cfg.process_std_room_c.powi(2),
                cfg.process_std_mass_c.powi(2),
            )),
            r: cfg.measurement_std_c.powi(2),
            innovation: 0.0,
        }
    }
}

/// Slot-average inputs applied to the zone, as measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotInputs {
    pub flow_kg_s: f64,
    pub t_sat_c: f64,
    pub weather: WeatherSample,
    pub gain_w: f64,
}

/// True when `m` is symmetric and positive semidefinite up to round-off.
pub fn is_psd(m: &Matrix2<f64>) -> bool {
    let scale = m.abs().max().max(1e-300);
    let tol = 1e-9 * scale;
    if !m.iter().all(|v| v.is_finite()) || (m[(0, 1)] - m[(1, 0)]).abs() > tol {
        return false;
    }
    m[(0, 0)] >= -tol && m[(1, 1)] >= -tol && m.determinant() >= -tol * scale
}

/// One-slot open-loop prediction with the bilinear model frozen at the
/// slot-average flow.
pub fn kf_predict(
    est: &EstimatorState,
    model: &ThermalParams,
    inputs: &SlotInputs,
    slot_s: f64,
) -> Result<EstimatorState> {
    if !is_psd(&est.p) || !is_psd(&est.q) || !(est.r >= 0.0) {
        return Err(Error::NotPsd);
    }
    let d = model.discretize(inputs.flow_kg_s, slot_s);
    let u = ThermalInputs {
        t_amb_c: inputs.weather.t_amb_c,
        solar_w_m2: inputs.weather.solar_w_m2,
        q_int_w: inputs.gain_w,
        fourth: inputs.t_sat_c,
    };
    let p = d.a * est.p * d.a.transpose() + est.q;
    Ok(EstimatorState {
        x: d.step(est.x, &u),
        p: 0.5 * (p + p.transpose()),
        ..est.clone()
    })
}

/// Predict over the past slot, then correct with the room measurement
/// (Joseph-form covariance update).
pub fn kf_update(
    est: &EstimatorState,
    measured_room_c: f64,
    model: &ThermalParams,
    inputs: &SlotInputs,
    slot_s: f64,
) -> Result<EstimatorState> {
    let prior = kf_predict(est, model, inputs, slot_s)?;
    let h = RowVector2::new(1.0, 0.0);
    let innovation = measured_room_c - prior.x[0];
    let s = prior.p[(0, 0)] + prior.r;
    if !innovation.is_finite() || !(s > 0.0) {
        return Err(Error::SimulationFault {
            t_s: f64::NAN,
            module: "climatectl",
            detail: format!("Kalman innovation {innovation} with variance {s}"),
        });
    }
    let k = prior.p.column(0) / s;
    let i_kh = Matrix2::identity() - k * h;
    let p = i_kh * prior.p * i_kh.transpose() + k * k.transpose() * prior.r;
    let p = 0.5 * (p + p.transpose());
    if !is_psd(&p) {
        return Err(Error::NotPsd);
    }
    Ok(EstimatorState {
        x: prior.x + k * innovation,
        p,
        innovation,
        ..prior
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub slot_s: f64,
    /// The MPC keeps the room this far below the actual comfort upper bound.
    pub comfort_margin_c: f64,
    /// Widening of the level-1 flow band on each side, as a fraction of its
    /// width; the result is clipped to the fan's speed range.
    pub band_widening: f64,
    /// Penalty for comfort slack when the hard problem is infeasible, € per °C
    /// per slot.
    pub slack_penalty_eur_c: f64,
    pub pwa_segments: usize,
    pub sat_setpoint_c: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            slot_s: 900.0,
            comfort_margin_c: 1.0,
            band_widening: 0.10,
            slack_penalty_eur_c: 1e4,
            pwa_segments: 4,
            sat_setpoint_c: 17.0,
        }
    }
}

/// Remaining-day optimization problem; slot 0 is the slot about to start.
#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub thermal: ThermalParams,
    pub fan: FanModel,
    pub forecast: Vec<WeatherSample>,
    pub internal_gain_w: Vec<f64>,
    pub lower_c: Vec<f64>,
    /// Actual comfort upper bounds; the MPC tightens them.
    pub upper_c: Vec<f64>,
    pub energy_eur_kwh: Vec<f64>,
    /// Committed capacities per slot.
    pub reserves: Vec<HourReserve>,
    /// Level-1 flow band.
    pub flow_lo_kg_s: f64,
    pub flow_hi_kg_s: f64,
    /// Linearization temperatures; defaults to the current estimate.
    pub t_ref_c: Option<Vec<f64>>,
    pub config: MpcConfig,
}

impl MpcProblem {
    pub fn horizon(&self) -> usize {
        self.forecast.len()
    }

    pub fn tightened_upper_c(&self) -> Vec<f64> {
        self.upper_c
            .iter()
            .zip(&self.lower_c)
            .map(|(&u, &l)| (u - self.config.comfort_margin_c).max(l))
            .collect()
    }

    /// Relaxed flow band used by the MPC.
    pub fn flow_limits(&self) -> (f64, f64) {
        let w = self.config.band_widening * (self.flow_hi_kg_s - self.flow_lo_kg_s);
        (
            (self.flow_lo_kg_s - w).max(self.fan.min_flow()),
            (self.flow_hi_kg_s + w).min(self.fan.max_flow()),
        )
    }

    /// Per-slot flow bounds that keep P - R_u and P + R_d inside the relaxed
    /// band on the exact fan curve. The flag is set where the commitment does
    /// not fit and the flow is pinned to the best compromise.
    pub fn deliverable_flows(&self) -> Vec<(f64, f64, bool)> {
        let (lo, hi) = self.flow_limits();
        let (p_lo, p_hi) = (self.fan.fan_power(lo), self.fan.fan_power(hi));
        let inv = |p: f64| self.fan.fan_power_inverse_full(p).flow_kg_s.clamp(lo, hi);
        self.reserves
            .iter()
            .take(self.horizon())
            .map(|r| {
                let (a, b) = (p_lo + r.r_up_w, p_hi - r.r_down_w);
                if a <= b {
                    (inv(a), inv(b), false)
                } else {
                    let m = inv(0.5 * (a + b));
                    (m, m, true)
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.horizon();
        if n == 0 {
            return Err(Error::InvalidArgument("MPC horizon is empty".into()));
        }
        let lens = [
            self.internal_gain_w.len(),
            self.lower_c.len(),
            self.upper_c.len(),
            self.energy_eur_kwh.len(),
        ];
        if lens.iter().any(|&l| l < n) {
            return Err(Error::InvalidArgument(format!(
                "MPC inputs shorter than the {n}-slot horizon"
            )));
        }
        if self.reserves.len() < n {
            return Err(Error::InvalidArgument(format!(
                "reserve schedule covers {} of {n} remaining slots",
                self.reserves.len()
            )));
        }
        if self.t_ref_c.as_ref().is_some_and(|t| t.len() < n) {
            return Err(Error::InvalidArgument(
                "linearization shorter than horizon".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcPlan {
    pub flows_kg_s: Vec<f64>,
    /// Fan power on the exact curve at the planned flows, W.
    pub power_w: Vec<f64>,
    /// Predicted end-of-slot states.
    pub room_c: Vec<f64>,
    pub mass_c: Vec<f64>,
    /// Comfort slack per slot, °C (all zero unless `relaxed`).
    pub slack_c: Vec<f64>,
    /// The hard-constrained problem was infeasible and comfort was softened.
    pub relaxed: bool,
    /// Some committed reserve could not fit in the relaxed flow band.
    pub reserve_conflict: bool,
}

impl MpcPlan {
    pub fn first_flow(&self) -> f64 {
        self.flows_kg_s[0]
    }

    pub fn first_power_w(&self) -> f64 {
        self.power_w[0]
    }

    /// Slot-average temperatures along the plan, for the next linearization.
    pub fn midpoints(&self, x0_room: f64) -> Vec<f64> {
        crate::linmodel::midpoints(x0_room, &self.room_c)
    }

    pub fn setpoints(&self, first_slot: usize) -> Vec<Setpoint> {
        self.flows_kg_s
            .iter()
            .zip(&self.power_w)
            .enumerate()
            .map(|(i, (&m, &p))| Setpoint {
                slot_index: first_slot + i,
                m_air_kg_s: m,
                p_b_w: p,
            })
            .collect()
    }
}

/// Minimum-cost flow plan from the current estimate to midnight.
pub fn solve_mpc(problem: &MpcProblem, est: &EstimatorState) -> Result<MpcPlan> {
    problem.validate()?;
    let n = problem.horizon();
    let cfg = &problem.config;
    let t_ref = problem.t_ref_c.clone().unwrap_or_else(|| vec![est.x[0]; n]);
    let dynamics = SlotDynamics::new(
        &problem.thermal,
        cfg.slot_s,
        &problem.forecast,
        &problem.internal_gain_w[..n],
        &t_ref[..n],
        cfg.sat_setpoint_c,
    );
    let (lo, hi) = problem.flow_limits();
    let pwa = problem.fan.piecewise_affine(lo, hi, cfg.pwa_segments);
    let pwa_kw = crate::plantsim::PiecewiseAffine::new(
        pwa.points().iter().map(|&(m, p)| (m, p / 1000.0)).collect(),
    );
    let bounds = problem.deliverable_flows();
    let flow_lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let flow_hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let slot_h = cfg.slot_s / 3600.0;
    let cost: Vec<f64> = problem.energy_eur_kwh[..n]
        .iter()
        .map(|c| c * slot_h)
        .collect();
    let upper = problem.tightened_upper_c();
    let mut spec = NominalSpec {
        dynamics: &dynamics,
        x0: est.x,
        flow_lo: &flow_lo,
        flow_hi: &flow_hi,
        pwa_kw: &pwa_kw,
        cost: &cost,
        lower_c: &problem.lower_c[..n],
        upper_c: &upper[..n],
        slack_penalty: None,
    };
    let (plan, relaxed) = match solve_nominal(&spec)? {
        Some(plan) => (plan, false),
        None => {
            spec.slack_penalty = Some(cfg.slack_penalty_eur_c);
            let plan = solve_nominal(&spec)?.ok_or_else(|| Error::Solver {
                message: "slack-relaxed MPC infeasible".into(),
                log: vec![format!("horizon {n}")],
            })?;
            (plan, true)
        }
    };
    Ok(MpcPlan {
        power_w: plan
            .flows
            .iter()
            .map(|&m| problem.fan.fan_power(m))
            .collect(),
        room_c: plan.states.iter().map(|x| x[0]).collect(),
        mass_c: plan.states.iter().map(|x| x[1]).collect(),
        slack_c: if relaxed { plan.slack_c } else { vec![0.0; n] },
        flows_kg_s: plan.flows,
        relaxed,
        reserve_conflict: bounds.iter().any(|b| b.2),
    })
}

/// One row of setpoint.csv.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub slot_index: usize,
    pub m_air_kg_s: f64,
    pub p_b_w: f64,
}

pub fn write_setpoint_csv(path: &Path, plan: &[Setpoint]) -> Result<()> {
    if plan.is_empty() {
        return Err(Error::EmptyPlan);
    }
    csvio::write_rows(
        path,
        &SETPOINT_HEADER,
        plan.iter()
            .map(|s| vec![s.slot_index.to_string(), num(s.m_air_kg_s), num(s.p_b_w)]),
    )
}

pub fn read_setpoint_csv(path: &Path) -> Result<Vec<Setpoint>> {
    let rows = csvio::read_rows(path, &SETPOINT_HEADER)?;
    if rows.is_empty() {
        return Err(Error::EmptyPlan);
    }
    rows.iter()
        .map(|r| {
            Ok(Setpoint {
                slot_index: r.usize(path, 0)?,
                m_air_kg_s: r.f64(path, 1)?,
                p_b_w: r.f64(path, 2)?,
            })
        })
        .collect()
}
