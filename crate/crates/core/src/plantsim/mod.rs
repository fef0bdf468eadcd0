//! Deterministic discrete-time simulation of one building cell: zone
//! thermal dynamics, supply fan, SAT loop, chilled-water plant, internal
//! gains and weather.

mod chilled;
mod fan;
mod thermal;
mod weather;

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub use chilled::{
    cooling_power, cooling_power_gpm_f, sat_loop_step, ChilledWaterLoop, ChilledWaterParams,
    CoilInputs, CP_WATER, KG_S_TO_GPM,
};
pub use fan::{FanModel, FlowLookup, HeatGainCurve, PiecewiseAffine, Segment};
pub use thermal::{spectral_radius, DiscreteModel, ThermalInputs, ThermalParams, CP_AIR};
pub use weather::{
    read_forecast_csv, write_weather_csv, ForecastBias, HeaterProcess, HeaterSchedule,
    WeatherProfile, WeatherSample, WeatherTrace, DAY_S, FORECAST_HEADER,
};

use crate::csvio::{self, num};
use crate::error::{Error, Result};

pub const MEASURE_HEADER: [&str; 9] = [
    "t_s",
    "T_room_C",
    "T_sat_C",
    "m_air_kg_s",
    "P_fan_W",
    "valve_frac",
    "T_chws_C",
    "T_chwr_C",
    "m_cw_kg_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    pub thermal: ThermalParams,
    pub fan: FanModel,
    pub chilled: ChilledWaterParams,
    /// Time constant of the fan drive response, s.
    pub actuator_tau_s: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            thermal: ThermalParams::default(),
            fan: FanModel::default(),
            chilled: ChilledWaterParams::default(),
            actuator_tau_s: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub t_room_c: f64,
    pub t_mass_c: f64,
    pub flow_kg_s: f64,
    pub speed: f64,
    pub fan_power_w: f64,
    pub chilled: ChilledWaterLoop,
    pub fan_energy_wh: f64,
    /// Water-side cooling energy, Wh.
    pub cooling_energy_wh: f64,
    /// Water-side cooling integral in gpm·°F·h.
    pub cooling_gpm_f_h: f64,
    pub chiller_energy_wh: f64,
}

impl PlantState {
    pub fn new(params: &PlantParams, t_room_c: f64, t_mass_c: f64, speed: f64) -> Self {
        let flow = params.fan.speed_to_flow(speed);
        let mut chilled = ChilledWaterLoop::new(&params.chilled, params.chilled.sat_setpoint_c);
        let gain = params.fan.heat_gain.rise_c(speed);
        chilled.t_sat_c = chilled.t_coil_c + gain;
        chilled.t_sensed_c = chilled.t_coil_c + params.chilled.heat_gain_sensed_fraction * gain;
        Self {
            t: 0.0,
            t_room_c,
            t_mass_c,
            flow_kg_s: flow,
            speed,
            fan_power_w: params.fan.fan_power(flow),
            chilled,
            fan_energy_wh: 0.0,
            cooling_energy_wh: 0.0,
            cooling_gpm_f_h: 0.0,
            chiller_energy_wh: 0.0,
        }
    }

    pub fn t_sat_c(&self) -> f64 {
        self.chilled.t_sat_c
    }

    pub fn measurement(&self) -> Measurement {
        Measurement {
            t_s: self.t,
            t_room_c: self.t_room_c,
            t_sat_c: self.chilled.t_sat_c,
            m_air_kg_s: self.flow_kg_s,
            p_fan_w: self.fan_power_w,
            valve_frac: self.chilled.valve,
            t_chws_c: self.chilled.t_chws_c,
            t_chwr_c: self.chilled.t_chwr_c,
            m_cw_kg_s: self.chilled.m_cw_kg_s,
        }
    }
}

/// Advances the plant by one tick of length `dt` with the fan commanded to
/// `speed_cmd` (fraction of full speed).
pub fn step_plant(
    params: &PlantParams,
    state: &PlantState,
    speed_cmd: f64,
    weather: WeatherSample,
    internal_gain_w: f64,
    dt: f64,
) -> Result<PlantState> {
    if !speed_cmd.is_finite() {
        return Err(fault(state.t, "fan speed command is not finite"));
    }
    let cmd = speed_cmd.clamp(0.0, params.fan.max_speed);
    let alpha = 1.0 - (-dt / params.actuator_tau_s).exp();
    let speed = state.speed + alpha * (cmd - state.speed);
    let flow = params.fan.speed_to_flow(speed);
    let fan_power = params.fan.fan_power(flow);

    let chilled = sat_loop_step(
        &state.chilled,
        &params.chilled,
        CoilInputs {
            air_flow_kg_s: flow,
            mixed_air_c: state.t_room_c,
            heat_gain_c: params.fan.heat_gain.rise_c(speed),
        },
        dt,
    );

    let x = Vector2::new(state.t_room_c, state.t_mass_c);
    let inputs = ThermalInputs {
        t_amb_c: weather.t_amb_c,
        solar_w_m2: weather.solar_w_m2,
        q_int_w: internal_gain_w,
        fourth: chilled.t_sat_c,
    };
    let x = params.thermal.rk4(x, flow, &inputs, dt);

    let to_wh = dt / 3600.0;
    let cool_prev = cooling_power(&state.chilled, &params.chilled);
    let cool_next = cooling_power(&chilled, &params.chilled);
    let next = PlantState {
        t: state.t + dt,
        t_room_c: x[0],
        t_mass_c: x[1],
        flow_kg_s: flow,
        speed,
        fan_power_w: fan_power,
        fan_energy_wh: state.fan_energy_wh + 0.5 * (state.fan_power_w + fan_power) * to_wh,
        cooling_energy_wh: state.cooling_energy_wh + 0.5 * (cool_prev + cool_next) * to_wh,
        cooling_gpm_f_h: state.cooling_gpm_f_h
            + 0.5 * (cooling_power_gpm_f(&state.chilled) + cooling_power_gpm_f(&chilled)) * to_wh,
        chiller_energy_wh: state.chiller_energy_wh
            + state.chilled.chiller_power_w(&params.chilled) * to_wh,
        chilled,
    };
    check_finite(&next)?;
    Ok(next)
}

fn fault(t_s: f64, detail: &str) -> Error {
    Error::SimulationFault {
        t_s,
        module: "plantsim",
        detail: detail.to_string(),
    }
}

fn check_finite(s: &PlantState) -> Result<()> {
    let values = [
        ("T_room", s.t_room_c),
        ("T_mass", s.t_mass_c),
        ("flow", s.flow_kg_s),
        ("fan_power", s.fan_power_w),
        ("T_sat", s.chilled.t_sat_c),
        ("tank", s.chilled.tank_c),
        ("valve", s.chilled.valve),
        ("T_chwr", s.chilled.t_chwr_c),
    ];
    for (name, v) in values {
        if !v.is_finite() {
            return Err(fault(s.t, &format!("{name} became {v}")));
        }
    }
    Ok(())
}

/// One row of measure.csv.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub t_s: f64,
    pub t_room_c: f64,
    pub t_sat_c: f64,
    pub m_air_kg_s: f64,
    pub p_fan_w: f64,
    pub valve_frac: f64,
    pub t_chws_c: f64,
    pub t_chwr_c: f64,
    pub m_cw_kg_s: f64,
}

pub fn write_measure_csv(path: &Path, rows: &[Measurement]) -> Result<()> {
    csvio::write_rows(
        path,
        &MEASURE_HEADER,
        rows.iter().map(|m| {
            vec![
                num(m.t_s),
                num(m.t_room_c),
                num(m.t_sat_c),
                num(m.m_air_kg_s),
                num(m.p_fan_w),
                num(m.valve_frac),
                num(m.t_chws_c),
                num(m.t_chwr_c),
                num(m.m_cw_kg_s),
            ]
        }),
    )
}

pub fn read_measure_csv(path: &Path) -> Result<Vec<Measurement>> {
    csvio::read_rows(path, &MEASURE_HEADER)?
        .iter()
        .map(|r| {
            Ok(Measurement {
                t_s: r.f64(path, 0)?,
                t_room_c: r.f64(path, 1)?,
                t_sat_c: r.f64(path, 2)?,
                m_air_kg_s: r.f64(path, 3)?,
                p_fan_w: r.f64(path, 4)?,
                valve_frac: r.f64(path, 5)?,
                t_chws_c: r.f64(path, 6)?,
                t_chwr_c: r.f64(path, 7)?,
                m_cw_kg_s: r.f64(path, 8)?,
            })
        })
        .collect()
}
