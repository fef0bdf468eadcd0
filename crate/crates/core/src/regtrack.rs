//! Level-3 regulation tracking: a switched feedforward / PI fan-speed
//! controller running every plant tick.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::csvio::{self, num};
use crate::error::{Error, Result};
use crate::plantsim::FanModel;

pub const TRACKING_HEADER: [&str; 9] = [
    "t_s", "w", "P_b_W", "R_u_W", "R_d_W", "P_d_W", "P_f_W", "e_c_W", "mode",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Feedforward,
    Pi,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Feedforward => "FF",
            Mode::Pi => "PI",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "FF" => Ok(Mode::Feedforward),
            "PI" => Ok(Mode::Pi),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredPower {
    pub p_d_w: f64,
    pub clamped: bool,
}

/// Baseline plus the signal scaled by the capacity on its side, saturated to
/// `[p_min_w, p_max_w]`.
pub fn desired_power(
    p_b_w: f64,
    w: f64,
    r_u_w: f64,
    r_d_w: f64,
    p_min_w: f64,
    p_max_w: f64,
) -> DesiredPower {
    let raw = if w >= 0.0 {
        p_b_w + w * r_d_w
    } else {
        p_b_w + w * r_u_w
    };
    let p = raw.clamp(p_min_w, p_max_w);
    DesiredPower {
        p_d_w: p,
        clamped: p != raw,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Feedforward is used when |ΔP_d| per tick reaches this fraction of
    /// rated power.
    pub switch_fraction: f64,
    /// Below this capacity (both directions) only the PI loop runs, W.
    pub reserve_floor_w: f64,
    /// PI gains normalized by the local fan-curve slope (speed per W times W
    /// per unit speed), per tick.
    pub kp_norm: f64,
    pub ki_norm: f64,
    /// Back-calculation gain for anti-windup.
    pub kaw: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            switch_fraction: 0.05,
            reserve_floor_w: 50.0,
            kp_norm: 0.3,
            ki_norm: 0.35,
            kaw: 1.0,
        }
    }
}

/// PI gains for three fan-power bands, inversely proportional to the slope
/// of the power curve (W per unit speed) at each band's center.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    /// Upper power edges of the low and mid bands, W.
    pub edges_w: [f64; 2],
    pub kp: [f64; 3],
    pub ki: [f64; 3],
}

impl GainSchedule {
    pub fn from_fan(fan: &FanModel, cfg: &TrackerConfig) -> Self {
        let (p_lo, p_hi) = (fan.min_power(), fan.max_power());
        let edge = |f: f64| p_lo + f * (p_hi - p_lo);
        let mut kp = [0.0; 3];
        let mut ki = [0.0; 3];
        for b in 0..3 {
            let center = edge((b as f64 + 0.5) / 3.0);
            let flow = fan.fan_power_inverse(center).flow_kg_s;
            let slope = fan.power_slope(flow) * fan.flow_gain_kg_s;
            kp[b] = cfg.kp_norm / slope;
            ki[b] = cfg.ki_norm / slope;
        }
        Self {
            edges_w: [edge(1.0 / 3.0), edge(2.0 / 3.0)],
            kp,
            ki,
        }
    }

    pub fn band(&self, p_w: f64) -> usize {
        if p_w < self.edges_w[0] {
            0
        } else if p_w < self.edges_w[1] {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub mode: Mode,
    /// PI integrator in speed units.
    pub integrator: f64,
    pub schedule: GainSchedule,
    pub last_p_d_w: Option<f64>,
    pub last_reserve_w: Option<(f64, f64)>,
    pub last_cmd: f64,
    /// Speed limits of the drive.
    pub min_speed: f64,
    pub max_speed: f64,
}

impl TrackerState {
    pub fn new(fan: &FanModel, cfg: &TrackerConfig, initial_speed: f64) -> Self {
        let s = initial_speed.clamp(fan.min_speed, fan.max_speed);
        Self {
            mode: Mode::Pi,
            integrator: s,
            schedule: GainSchedule::from_fan(fan, cfg),
            last_p_d_w: None,
            last_reserve_w: None,
            last_cmd: s,
            min_speed: fan.min_speed,
            max_speed: fan.max_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackInput {
    /// Desired power as seen by the controller, W.
    pub p_d_w: f64,
    /// Measured fan power, W.
    pub p_f_w: f64,
    pub r_u_w: f64,
    pub r_d_w: f64,
}

/// One controller tick. Returns the next state; the speed command is
/// `state.last_cmd` and the active mode `state.mode`.
pub fn track_step(
    state: &TrackerState,
    input: &TrackInput,
    fan: &FanModel,
    cfg: &TrackerConfig,
) -> TrackerState {
    let (lo, hi) = (state.min_speed, state.max_speed);
    let reserve = (input.r_u_w, input.r_d_w);
    let active = input.r_u_w.max(input.r_d_w) >= cfg.reserve_floor_w;
    let jump = state
        .last_p_d_w
        .is_none_or(|p| (input.p_d_w - p).abs() >= cfg.switch_fraction * fan.rated_power_w);
    let capacity_step = state.last_reserve_w.is_some_and(|r| r != reserve);
    let feedforward = active && (jump || capacity_step);

    let band = state.schedule.band(input.p_d_w);
    let (kp, ki) = (state.schedule.kp[band], state.schedule.ki[band]);
    let err = input.p_d_w - input.p_f_w;
    let (cmd, integrator, mode) = if feedforward {
        let cmd = fan
            .flow_to_speed(fan.fan_power_inverse(input.p_d_w).flow_kg_s)
            .clamp(lo, hi);
        // Bumpless: the PI output at the current error equals the
        // feedforward command.
        ((cmd), (cmd - kp * err).clamp(lo, hi), Mode::Feedforward)
    } else {
        let raw = state.integrator + kp * err;
        let cmd = raw.clamp(lo, hi);
        let integ = state.integrator + ki * err + cfg.kaw * (cmd - raw);
        (cmd, integ.clamp(lo, hi), Mode::Pi)
    };
    TrackerState {
        mode,
        integrator,
        schedule: state.schedule.clone(),
        last_p_d_w: Some(input.p_d_w),
        last_reserve_w: Some(reserve),
        last_cmd: cmd,
        min_speed: lo,
        max_speed: hi,
    }
}

/// One row of tracking.csv.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingRecord {
    pub t_s: f64,
    pub w: f64,
    pub p_b_w: f64,
    pub r_u_w: f64,
    pub r_d_w: f64,
    pub p_d_w: f64,
    pub p_f_w: f64,
    pub e_c_w: f64,
    pub mode: Mode,
}

impl TrackingRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t_s: f64,
        w: f64,
        p_b_w: f64,
        r_u_w: f64,
        r_d_w: f64,
        p_d_w: f64,
        p_f_w: f64,
        mode: Mode,
    ) -> Self {
        Self {
            t_s,
            w,
            p_b_w,
            r_u_w,
            r_d_w,
            p_d_w,
            p_f_w,
            e_c_w: p_d_w - p_f_w,
            mode,
        }
    }
}

pub fn write_tracking_csv(path: &Path, records: &[TrackingRecord]) -> Result<()> {
    csvio::write_rows(
        path,
        &TRACKING_HEADER,
        records.iter().map(|r| {
            vec![
                num(r.t_s),
                num(r.w),
                num(r.p_b_w),
                num(r.r_u_w),
                num(r.r_d_w),
                num(r.p_d_w),
                num(r.p_f_w),
                num(r.e_c_w),
                r.mode.to_string(),
            ]
        }),
    )
}

pub fn read_tracking_csv(path: &Path) -> Result<Vec<TrackingRecord>> {
    csvio::read_rows(path, &TRACKING_HEADER)?
        .iter()
        .map(|r| {
            let mode = r
                .str(8)
                .parse()
                .map_err(|m: String| csvio::parse_err(path, r.line, m))?;
            let rec = TrackingRecord {
                t_s: r.f64(path, 0)?,
                w: r.f64(path, 1)?,
                p_b_w: r.f64(path, 2)?,
                r_u_w: r.f64(path, 3)?,
                r_d_w: r.f64(path, 4)?,
                p_d_w: r.f64(path, 5)?,
                p_f_w: r.f64(path, 6)?,
                e_c_w: r.f64(path, 7)?,
                mode,
            };
            if !(-1.0..=1.0).contains(&rec.w) {
                return Err(Error::OutOfRange {
                    path: path.to_path_buf(),
                    line: r.line,
                    value: rec.w,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
            Ok(rec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fan power after `ticks` of the one-tick actuator lag at 4 s.
    fn plant_step(fan: &FanModel, speed: f64, cmd: f64) -> f64 {
        let alpha = 1.0 - (-1.0_f64).exp();
        speed + alpha * (cmd.clamp(0.0, fan.max_speed) - speed)
    }

    #[test]
    fn desired_power_cases() {
        let d = desired_power(1000.0, 0.0, 375.0, 400.0, 0.0, 2250.0);
        assert_eq!(d.p_d_w, 1000.0);
        assert!(!d.clamped);
        let d = desired_power(1000.0, -1.0, 375.0, 400.0, 0.0, 2250.0);
        assert_eq!(d.p_d_w, 625.0);
        let d = desired_power(1000.0, 1.0, 375.0, 1500.0, 0.0, 2250.0);
        assert_eq!(d.p_d_w, 2250.0);
        assert!(d.clamped);
    }

    #[test]
    fn equilibrium_holds_command() {
        let fan = FanModel::default();
        let cfg = TrackerConfig::default();
        let mut st = TrackerState::new(&fan, &cfg, 0.5);
        let p = fan.power_at_speed(0.5);
        st.last_p_d_w = Some(p);
        st.last_reserve_w = Some((300.0, 300.0));
        let input = TrackInput {
            p_d_w: p,
            p_f_w: p,
            r_u_w: 300.0,
            r_d_w: 300.0,
        };
        let next = track_step(&st, &input, &fan, &cfg);
        assert_eq!(next.mode, Mode::Pi);
        assert_eq!(next.last_cmd, 0.5);
    }

    #[test]
    fn large_step_uses_feedforward() {
        let fan = FanModel::default();
        let cfg = TrackerConfig::default();
        let mut st = TrackerState::new(&fan, &cfg, 0.5);
        st.last_p_d_w = Some(600.0);
        st.last_reserve_w = Some((800.0, 800.0));
        let input = TrackInput {
            p_d_w: 600.0 + 0.4 * fan.rated_power_w,
            p_f_w: 600.0,
            r_u_w: 800.0,
            r_d_w: 800.0,
        };
        let next = track_step(&st, &input, &fan, &cfg);
        assert_eq!(next.mode, Mode::Feedforward);
        let p = fan.power_at_speed(next.last_cmd);
        assert!((p - input.p_d_w).abs() < 1e-6);
    }

    #[test]
    fn integral_action_removes_measurement_bias() {
        let fan = FanModel::default();
        let cfg = TrackerConfig::default();
        let target = 900.0;
        let mut speed = fan.flow_to_speed(fan.fan_power_inverse(target).flow_kg_s);
        let mut st = TrackerState::new(&fan, &cfg, speed);
        st.last_p_d_w = Some(target);
        st.last_reserve_w = Some((0.0, 0.0));
        let mut errs = Vec::new();
        for _ in 0..40 {
            let measured = fan.power_at_speed(speed) + 10.0;
            let input = TrackInput {
                p_d_w: target,
                p_f_w: measured,
                r_u_w: 0.0,
                r_d_w: 0.0,
            };
            st = track_step(&st, &input, &fan, &cfg);
            speed = plant_step(&fan, speed, st.last_cmd);
            errs.push(target - measured);
        }
        assert!(errs[0].abs() > 9.0);
        assert!(errs[20..].iter().all(|e| e.abs() < 0.5), "{errs:?}");
    }

    #[test]
    fn tracking_csv_round_trip() {
        let rows = vec![
            TrackingRecord::new(0.0, 0.25, 900.0, 300.0, 300.0, 975.0, 960.5, Mode::Pi),
            TrackingRecord::new(
                4.0,
                -0.5,
                900.0,
                300.0,
                300.0,
                750.0,
                800.0,
                Mode::Feedforward,
            ),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tracking.csv");
        write_tracking_csv(&path, &rows).unwrap();
        assert_eq!(read_tracking_csv(&path).unwrap(), rows);
        assert_eq!(rows[1].e_c_w, -50.0);
    }
}
