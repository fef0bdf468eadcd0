//! Supply-air temperature loop and the chilled-water side that feeds it:
//! cooling coil with a PI-controlled valve, a storage tank, and a two-stage
//! chiller cycling on tank temperature.

use serde::{Deserialize, Serialize};

use super::thermal::CP_AIR;

pub const CP_WATER: f64 = 4186.0;

/// kg/s of water to US gallons per minute.
pub const KG_S_TO_GPM: f64 = 15.850_323;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChilledWaterParams {
    pub sat_setpoint_c: f64,
    pub pi_kp: f64,
    pub pi_ki: f64,
    /// Back-calculation gain on the saturation excess, 1/s.
    pub pi_kaw: f64,
    /// First-order lag of the coil-leaving air temperature, s.
    pub sat_time_constant_s: f64,
    /// Share of the fan heat rise seen by the SAT control sensor; the rest
    /// reaches the zone unregulated.
    pub heat_gain_sensed_fraction: f64,
    /// Coil conductance at full valve opening, W/K.
    pub coil_ua_w_k: f64,
    pub cw_max_flow_kg_s: f64,
    pub cp_water: f64,
    pub cp_air: f64,
    pub tank_capacity_j_k: f64,
    pub tank_setpoint_c: f64,
    pub hysteresis_c: f64,
    pub stage_cooling_w: [f64; 2],
    pub stage_power_w: [f64; 2],
}

impl Default for ChilledWaterParams {
    fn default() -> Self {
        Self {
            sat_setpoint_c: 17.0,
            pi_kp: 0.08,
            pi_ki: 0.003,
            pi_kaw: 0.05,
            sat_time_constant_s: 40.0,
            heat_gain_sensed_fraction: 0.5,
            coil_ua_w_k: 1400.0,
            cw_max_flow_kg_s: 0.6,
            cp_water: CP_WATER,
            cp_air: CP_AIR,
            tank_capacity_j_k: 5.0e4,
            tank_setpoint_c: 7.0,
            hysteresis_c: 0.5,
            stage_cooling_w: [4000.0, 8000.0],
            stage_power_w: [1300.0, 2600.0],
        }
    }
}

/// Dynamic state of the SAT loop and chilled-water circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChilledWaterLoop {
    pub tank_c: f64,
    pub stage: u8,
    pub valve: f64,
    pub integrator: f64,
    /// Coil-leaving air temperature, °C.
    pub t_coil_c: f64,
    /// Supply air delivered to the zone (coil outlet plus fan heat), °C.
    pub t_sat_c: f64,
    /// Temperature seen by the SAT control sensor, °C.
    pub t_sensed_c: f64,
    pub t_chws_c: f64,
    pub t_chwr_c: f64,
    pub m_cw_kg_s: f64,
    /// Heat removed from the supply air by the coil, W.
    pub coil_load_w: f64,
    /// When set, the valve is pinned here and the PI is bypassed.
    pub valve_override: Option<f64>,
}

impl ChilledWaterLoop {
    pub fn new(params: &ChilledWaterParams, t_sat_c: f64) -> Self {
        Self {
            tank_c: params.tank_setpoint_c,
            stage: 0,
            valve: 0.0,
            integrator: 0.0,
            t_coil_c: t_sat_c,
            t_sat_c,
            t_sensed_c: t_sat_c,
            t_chws_c: params.tank_setpoint_c,
            t_chwr_c: params.tank_setpoint_c,
            m_cw_kg_s: 0.0,
            coil_load_w: 0.0,
            valve_override: None,
        }
    }

    pub fn chiller_power_w(&self, params: &ChilledWaterParams) -> f64 {
        match self.stage {
            0 => 0.0,
            s => params.stage_power_w[usize::from(s) - 1],
        }
    }

    fn chiller_cooling_w(&self, params: &ChilledWaterParams) -> f64 {
        match self.stage {
            0 => 0.0,
            s => params.stage_cooling_w[usize::from(s) - 1],
        }
    }
}

/// Water-side cooling power ṁ_cw c_p,w (T_ch,r − T_ch,s) in W.
pub fn cooling_power(lp: &ChilledWaterLoop, params: &ChilledWaterParams) -> f64 {
    lp.m_cw_kg_s * params.cp_water * (lp.t_chwr_c - lp.t_chws_c)
}

/// Same quantity in the facility's raw bookkeeping unit, gpm·°F.
pub fn cooling_power_gpm_f(lp: &ChilledWaterLoop) -> f64 {
    lp.m_cw_kg_s * KG_S_TO_GPM * (lp.t_chwr_c - lp.t_chws_c) * 1.8
}

/// Inputs the air side presents to the coil during one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilInputs {
    pub air_flow_kg_s: f64,
    pub mixed_air_c: f64,
    /// SAT rise caused by fan rotation, °C.
    pub heat_gain_c: f64,
}

/// Advances the SAT loop, coil and chilled-water tank by `dt`.
pub fn sat_loop_step(
    lp: &ChilledWaterLoop,
    params: &ChilledWaterParams,
    inputs: CoilInputs,
    dt: f64,
) -> ChilledWaterLoop {
    let mut next = lp.clone();

    // Valve from PI on the measured SAT error.
    let err = lp.t_sensed_c - params.sat_setpoint_c;
    match lp.valve_override {
        Some(v) => {
            next.valve = v.clamp(0.0, 1.0);
        }
        None => {
            let raw = params.pi_kp * err + lp.integrator;
            let valve = raw.clamp(0.0, 1.0);
            next.integrator =
                lp.integrator + dt * (params.pi_ki * err + params.pi_kaw * (valve - raw));
            next.valve = valve;
        }
    }

    // Coil: effectiveness-limited heat removal from the air stream.
    let m_air = inputs.air_flow_kg_s.max(0.0);
    let c_air = m_air * params.cp_air;
    let t_chws = lp.tank_c;
    let q_coil = if c_air > 0.0 {
        let eff = 1.0 - (-params.coil_ua_w_k * next.valve / c_air).exp();
        (eff * c_air * (inputs.mixed_air_c - t_chws)).max(0.0)
    } else {
        0.0
    };
    let m_cw = next.valve * params.cw_max_flow_kg_s;
    next.m_cw_kg_s = m_cw;
    next.coil_load_w = q_coil;
    next.t_chws_c = t_chws;
    next.t_chwr_c = if m_cw > 0.0 {
        t_chws + q_coil / (m_cw * params.cp_water)
    } else {
        t_chws
    };

    // Coil outlet relaxes toward its steady value; fan heat adds on top.
    let target = if c_air > 0.0 {
        inputs.mixed_air_c - q_coil / c_air
    } else {
        inputs.mixed_air_c
    };
    let alpha = 1.0 - (-dt / params.sat_time_constant_s).exp();
    next.t_coil_c = lp.t_coil_c + alpha * (target - lp.t_coil_c);
    next.t_sat_c = next.t_coil_c + inputs.heat_gain_c;
    next.t_sensed_c = next.t_coil_c + params.heat_gain_sensed_fraction * inputs.heat_gain_c;

    // Tank energy balance and staging on the updated tank temperature.
    next.tank_c =
        lp.tank_c + dt * (q_coil - lp.chiller_cooling_w(params)) / params.tank_capacity_j_k;
    next.stage = next_stage(lp.stage, next.tank_c, params);
    next
}

fn next_stage(stage: u8, tank_c: f64, p: &ChilledWaterParams) -> u8 {
    let (set, band) = (p.tank_setpoint_c, p.hysteresis_c);
    match stage {
        0 if tank_c >= set + band => 1,
        1 if tank_c >= set + 2.0 * band => 2,
        1 if tank_c <= set - band => 0,
        2 if tank_c <= set => 1,
        s => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(
        params: &ChilledWaterParams,
        lp: &mut ChilledWaterLoop,
        inputs: CoilInputs,
        ticks: usize,
    ) {
        for _ in 0..ticks {
            *lp = sat_loop_step(lp, params, inputs, 4.0);
        }
    }

    #[test]
    fn cooling_power_arithmetic() {
        let p = ChilledWaterParams::default();
        let mut lp = ChilledWaterLoop::new(&p, 17.0);
        lp.m_cw_kg_s = 0.5;
        lp.t_chws_c = 7.0;
        lp.t_chwr_c = 11.0;
        assert!((cooling_power(&lp, &p) - 8372.0).abs() < 1e-9);
        lp.m_cw_kg_s = 1.0;
        assert!((cooling_power(&lp, &p) - 16744.0).abs() < 1e-9);
        lp.t_chwr_c = 7.0;
        assert_eq!(cooling_power(&lp, &p), 0.0);
    }

    #[test]
    fn sat_settles_at_setpoint_below_half_speed() {
        let p = ChilledWaterParams::default();
        for flow in [0.15, 0.3, 0.6] {
            let mut lp = ChilledWaterLoop::new(&p, 20.0);
            let inputs = CoilInputs {
                air_flow_kg_s: flow,
                mixed_air_c: 23.0,
                heat_gain_c: 0.0,
            };
            run(&p, &mut lp, inputs, 3000);
            assert!(
                (lp.t_sat_c - 17.0).abs() <= 0.1,
                "flow {flow}: {}",
                lp.t_sat_c
            );
            assert!(lp.t_chws_c <= lp.t_chwr_c);
        }
    }

    #[test]
    fn closed_valve_sat_rises_monotonically() {
        let p = ChilledWaterParams::default();
        let mut lp = ChilledWaterLoop::new(&p, 17.0);
        lp.valve_override = Some(0.0);
        let inputs = CoilInputs {
            air_flow_kg_s: 0.5,
            mixed_air_c: 24.0,
            heat_gain_c: 0.0,
        };
        let mut prev = lp.t_sat_c;
        for _ in 0..200 {
            lp = sat_loop_step(&lp, &p, inputs, 4.0);
            assert!(lp.t_sat_c >= prev);
            prev = lp.t_sat_c;
        }
        assert!(prev > 23.5);
    }

    #[test]
    fn stages_respect_hysteresis() {
        let p = ChilledWaterParams {
            tank_setpoint_c: 7.0,
            hysteresis_c: 1.0,
            ..Default::default()
        };
        assert_eq!(next_stage(0, 7.9, &p), 0);
        assert_eq!(next_stage(0, 8.0, &p), 1);
        assert_eq!(next_stage(1, 8.5, &p), 1);
        assert_eq!(next_stage(1, 9.0, &p), 2);
        assert_eq!(next_stage(2, 7.5, &p), 2);
        assert_eq!(next_stage(2, 7.0, &p), 1);
        assert_eq!(next_stage(1, 6.0, &p), 0);
    }

    #[test]
    fn higher_gain_reduces_flow_step_deviation() {
        let peak = |kp: f64, ki: f64| {
            let p = ChilledWaterParams {
                pi_kp: kp,
                pi_ki: ki,
                ..Default::default()
            };
            let mut lp = ChilledWaterLoop::new(&p, 17.0);
            let before = CoilInputs {
                air_flow_kg_s: 0.3,
                mixed_air_c: 23.0,
                heat_gain_c: 0.0,
            };
            run(&p, &mut lp, before, 3000);
            let after = CoilInputs {
                air_flow_kg_s: 0.8,
                ..before
            };
            let mut worst: f64 = 0.0;
            for _ in 0..600 {
                lp = sat_loop_step(&lp, &p, after, 4.0);
                worst = worst.max((lp.t_sat_c - 17.0).abs());
            }
            worst
        };
        let low = peak(0.1, 0.005);
        let high = peak(0.4, 0.03);
        assert!(high < low, "high gain {high} vs low gain {low}");
    }
}
