//! Two-state RC zone model: room air and lumped building mass.
//!
//! Continuous dynamics
//!
//! ```text
//! C_r dT_r/dt = H (T_m - T_r) + UA_ra (T_a - T_r) + f_sa A_s I + f_ga q + m c_pa (T_s - T_r)
//! C_m dT_m/dt = H (T_r - T_m) + UA_ma (T_a - T_m) + (1-f_sa) A_s I + (1-f_ga) q
//! ```
//!
//! with ambient T_a, irradiance I, internal gain q, supply-air temperature T_s
//! and air mass flow m. The plant integrates these directly; the optimizers
//! use zero-order-hold discretizations.

use nalgebra::{Matrix2, SMatrix, Vector2};
use serde::{Deserialize, Serialize};

pub const CP_AIR: f64 = 1005.0;

/// Exogenous inputs in the order used by every input matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalInputs {
    pub t_amb_c: f64,
    pub solar_w_m2: f64,
    pub q_int_w: f64,
    /// Supply-air temperature, or cooling power in W for the cooling form.
    pub fourth: f64,
}

impl ThermalInputs {
    pub fn as_vector(&self) -> SMatrix<f64, 4, 1> {
        SMatrix::<f64, 4, 1>::new(self.t_amb_c, self.solar_w_m2, self.q_int_w, self.fourth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParams {
    pub c_room_j_k: f64,
    pub c_mass_j_k: f64,
    pub h_room_mass_w_k: f64,
    pub ua_room_amb_w_k: f64,
    pub ua_mass_amb_w_k: f64,
    pub solar_aperture_m2: f64,
    pub solar_to_room: f64,
    pub gain_to_room: f64,
    pub cp_air: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self {
            c_room_j_k: 2.0e6,
            c_mass_j_k: 1.5e7,
            h_room_mass_w_k: 400.0,
            ua_room_amb_w_k: 100.0,
            ua_mass_amb_w_k: 30.0,
            solar_aperture_m2: 2.5,
            solar_to_room: 0.5,
            gain_to_room: 0.7,
            cp_air: CP_AIR,
        }
    }
}

/// Discrete-time linear model x+ = a x + b u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteModel {
    pub a: Matrix2<f64>,
    pub b: SMatrix<f64, 2, 4>,
    pub step_s: f64,
}

impl DiscreteModel {
    pub fn step(&self, x: Vector2<f64>, u: &ThermalInputs) -> Vector2<f64> {
        self.a * x + self.b * u.as_vector()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

pub fn spectral_radius(a: &Matrix2<f64>) -> f64 {
    let tr = a.trace();
    let det = a.determinant();
    let disc = tr * tr / 4.0 - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (tr / 2.0 + s).abs().max((tr / 2.0 - s).abs())
    } else {
        det.abs().sqrt()
    }
}

impl ThermalParams {
    /// Continuous (A, B) at air flow `flow_kg_s`, inputs [T_a, I, q, T_s].
    pub fn continuous(&self, flow_kg_s: f64) -> (Matrix2<f64>, SMatrix<f64, 2, 4>) {
        let (cr, cm) = (self.c_room_j_k, self.c_mass_j_k);
        let h = self.h_room_mass_w_k;
        let mc = flow_kg_s * self.cp_air;
        let a = Matrix2::new(
            -(h + self.ua_room_amb_w_k + mc) / cr,
            h / cr,
            h / cm,
            -(h + self.ua_mass_amb_w_k) / cm,
        );
        let sa = self.solar_aperture_m2;
        let b = SMatrix::<f64, 2, 4>::new(
            self.ua_room_amb_w_k / cr,
            self.solar_to_room * sa / cr,
            self.gain_to_room / cr,
            mc / cr,
            self.ua_mass_amb_w_k / cm,
            (1.0 - self.solar_to_room) * sa / cm,
            (1.0 - self.gain_to_room) / cm,
            0.0,
        );
        (a, b)
    }

    /// Continuous model with cooling power (W removed from the room air) as
    /// the fourth input instead of supply-air temperature.
    pub fn continuous_cooling_form(&self) -> (Matrix2<f64>, SMatrix<f64, 2, 4>) {
        let (a, mut b) = self.continuous(0.0);
        b[(0, 3)] = -1.0 / self.c_room_j_k;
        b[(1, 3)] = 0.0;
        (a, b)
    }

    pub fn discretize(&self, flow_kg_s: f64, step_s: f64) -> DiscreteModel {
        let (a, b) = self.continuous(flow_kg_s);
        zoh(a, b, step_s)
    }

    pub fn discretize_cooling_form(&self, step_s: f64) -> DiscreteModel {
        let (a, b) = self.continuous_cooling_form();
        zoh(a, b, step_s)
    }

    pub fn derivative(&self, x: Vector2<f64>, flow_kg_s: f64, u: &ThermalInputs) -> Vector2<f64> {
        let (a, b) = self.continuous(flow_kg_s);
        a * x + b * u.as_vector()
    }

    /// One RK4 step of the continuous dynamics with inputs held over `dt`.
    pub fn rk4(&self, x: Vector2<f64>, flow_kg_s: f64, u: &ThermalInputs, dt: f64) -> Vector2<f64> {
        let (a, b) = self.continuous(flow_kg_s);
        let bu = b * u.as_vector();
        let f = |x: Vector2<f64>| a * x + bu;
        let k1 = f(x);
        let k2 = f(x + k1 * (dt / 2.0));
        let k3 = f(x + k2 * (dt / 2.0));
        let k4 = f(x + k3 * dt);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    /// Copy with the envelope and capacities distorted by `factor`: used to
    /// emulate an outdated identified model.
    pub fn mismatched(&self, factor: f64) -> Self {
        Self {
            c_room_j_k: self.c_room_j_k * factor,
            c_mass_j_k: self.c_mass_j_k * factor,
            ua_room_amb_w_k: self.ua_room_amb_w_k / factor,
            solar_aperture_m2: self.solar_aperture_m2 / factor,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("c_room_j_k", self.c_room_j_k),
            ("c_mass_j_k", self.c_mass_j_k),
            ("h_room_mass_w_k", self.h_room_mass_w_k),
            ("cp_air", self.cp_air),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("ua_room_amb_w_k", self.ua_room_amb_w_k),
            ("ua_mass_amb_w_k", self.ua_mass_amb_w_k),
            ("solar_aperture_m2", self.solar_aperture_m2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be non-negative"));
            }
        }
        for (name, v) in [
            ("solar_to_room", self.solar_to_room),
            ("gain_to_room", self.gain_to_room),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Exact zero-order-hold discretization through the exponential of the
/// augmented matrix [[A, B], [0, 0]].
fn zoh(a: Matrix2<f64>, b: SMatrix<f64, 2, 4>, dt: f64) -> DiscreteModel {
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(a * dt));
    m.fixed_view_mut::<2, 4>(0, 2).copy_from(&(b * dt));
    let e = m.exp();
    DiscreteModel {
        a: e.fixed_view::<2, 2>(0, 0).into_owned(),
        b: e.fixed_view::<2, 4>(0, 2).into_owned(),
        step_s: dt,
    }
}
