//! Slot-level linear prediction model shared by the scheduler and the MPC.
//!
//! Supply-air cooling `m c_pa (T_room - T_sat)` is bilinear; around a
//! reference room temperature `T_ref,k` per slot it becomes linear in the
//! flow, `q_k = c_pa (T_ref,k - T_sat) m_k`, and the zero-order-hold model
//! in cooling form gives `x_{k+1} = A x_k + d_k + f_k m_k`.

use nalgebra::{Matrix2, Vector2};

use crate::error::Result;
use crate::lp::{Cmp, LpModel, LpOutcome};
use crate::plantsim::{PiecewiseAffine, ThermalInputs, ThermalParams, WeatherSample};

#[derive(Debug, Clone)]
pub(crate) struct SlotDynamics {
    pub a: Matrix2<f64>,
    /// Flow-independent drift per slot.
    pub drift: Vec<Vector2<f64>>,
    /// State change per kg/s of air flow per slot.
    pub flow: Vec<Vector2<f64>>,
}

/// Lowest reference temperature used, so cooling never turns into heating.
pub(crate) const MIN_REF_ABOVE_SAT: f64 = 0.5;

impl SlotDynamics {
    pub fn new(
        thermal: &ThermalParams,
        slot_s: f64,
        weather: &[WeatherSample],
        gains_w: &[f64],
        t_ref_c: &[f64],
        t_sat_c: f64,
    ) -> Self {
        let d = thermal.discretize_cooling_form(slot_s);
        let cool_col = d.b.column(3).into_owned();
        let mut drift = Vec::with_capacity(weather.len());
        let mut flow = Vec::with_capacity(weather.len());
        for k in 0..weather.len() {
            let u = ThermalInputs {
                t_amb_c: weather[k].t_amb_c,
                solar_w_m2: weather[k].solar_w_m2,
                q_int_w: gains_w[k],
                fourth: 0.0,
            };
            drift.push(d.b * u.as_vector());
            let dt = (t_ref_c[k] - t_sat_c).max(MIN_REF_ABOVE_SAT);
            flow.push(cool_col * (thermal.cp_air * dt));
        }
        Self {
            a: d.a,
            drift,
            flow,
        }
    }

    /// States at the end of every slot.
    pub fn simulate(&self, x0: Vector2<f64>, flows: &[f64]) -> Vec<Vector2<f64>> {
        let mut x = x0;
        flows
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                x = self.a * x + self.drift[k] + self.flow[k] * m;
                x
            })
            .collect()
    }
}

/// Slot-average reference temperatures from a room trajectory.
pub(crate) fn midpoints(x0_room: f64, ends: &[f64]) -> Vec<f64> {
    let mut prev = x0_room;
    ends.iter()
        .map(|&e| {
            let m = 0.5 * (prev + e);
            prev = e;
            m
        })
        .collect()
}

/// Single-trajectory energy-cost minimization over a horizon: the common
/// core of the scheduler's start point and the climate MPC.
pub(crate) struct NominalSpec<'a> {
    pub dynamics: &'a SlotDynamics,
    pub x0: Vector2<f64>,
    pub flow_lo: &'a [f64],
    pub flow_hi: &'a [f64],
    /// Fan curve interpolation in kW.
    pub pwa_kw: &'a PiecewiseAffine,
    /// Objective weight per kW of fan power in each slot.
    pub cost: &'a [f64],
    pub lower_c: &'a [f64],
    pub upper_c: &'a [f64],
    /// When set, comfort is soft with this penalty per °C of violation.
    pub slack_penalty: Option<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct NominalPlan {
    pub flows: Vec<f64>,
    pub states: Vec<Vector2<f64>>,
    pub slack_c: Vec<f64>,
}

pub(crate) fn solve_nominal(spec: &NominalSpec<'_>) -> Result<Option<NominalPlan>> {
    let n = spec.dynamics.drift.len();
    let mut lp = LpModel::new(false);
    let flows: Vec<usize> = (0..n)
        .map(|k| lp.add_var(0.0, spec.flow_lo[k], spec.flow_hi[k].max(spec.flow_lo[k])))
        .collect();
    let power: Vec<usize> = (0..n)
        .map(|k| lp.add_var(spec.cost[k], 0.0, f64::INFINITY))
        .collect();
    let soft = spec.slack_penalty.is_some();
    let states: Vec<[usize; 2]> = (0..n)
        .map(|k| {
            let (lo, hi) = if soft {
                (-100.0, 200.0)
            } else {
                (spec.lower_c[k], spec.upper_c[k])
            };
            [lp.add_var(0.0, lo, hi), lp.add_var(0.0, -100.0, 200.0)]
        })
        .collect();
    let slack: Vec<usize> = match spec.slack_penalty {
        Some(pen) => (0..n)
            .map(|_| lp.add_var(pen, 0.0, f64::INFINITY))
            .collect(),
        None => Vec::new(),
    };
    let segments = spec.pwa_kw.segments();
    for k in 0..n {
        for s in &segments {
            lp.add_con(
                vec![(power[k], 1.0), (flows[k], -s.slope)],
                Cmp::Ge,
                s.intercept,
            );
        }
        add_dynamics_rows(
            &mut lp,
            spec.dynamics,
            spec.x0,
            &states,
            k,
            &[(flows[k], 1.0)],
        );
        if soft {
            lp.add_con(
                vec![(states[k][0], 1.0), (slack[k], 1.0)],
                Cmp::Ge,
                spec.lower_c[k],
            );
            lp.add_con(
                vec![(states[k][0], 1.0), (slack[k], -1.0)],
                Cmp::Le,
                spec.upper_c[k],
            );
        }
    }
    let x = match lp.solve()? {
        LpOutcome::Infeasible => return Ok(None),
        LpOutcome::Optimal { x, .. } => x,
    };
    let flow_values: Vec<f64> = flows.iter().map(|&i| x[i]).collect();
    Ok(Some(NominalPlan {
        states: spec.dynamics.simulate(spec.x0, &flow_values),
        slack_c: slack.iter().map(|&i| x[i].max(0.0)).collect(),
        flows: flow_values,
    }))
}

/// Adds the two rows x_{k+1} = A x_k + d_k + f_k * (sum of weighted flows).
pub(crate) fn add_dynamics_rows(
    lp: &mut LpModel,
    dynamics: &SlotDynamics,
    x0: Vector2<f64>,
    states: &[[usize; 2]],
    k: usize,
    flow_terms: &[(usize, f64)],
) {
    for i in 0..2 {
        let mut terms = vec![(states[k][i], 1.0)];
        let mut rhs = dynamics.drift[k][i];
        for j in 0..2 {
            let a = dynamics.a[(i, j)];
            if k == 0 {
                rhs += a * x0[j];
            } else {
                terms.push((states[k - 1][j], -a));
            }
        }
        let f = dynamics.flow[k][i];
        if f != 0.0 {
            for &(var, w) in flow_terms {
                if w != 0.0 {
                    terms.push((var, -f * w));
                }
            }
        }
        lp.add_con(terms, Cmp::Eq, rhs);
    }
}
