use super::TICK_S;
use crate::error::{Error, Result};
use crate::plantsim::{step_plant, PlantParams, PlantState, WeatherSample};
use crate::regsignal::{DelayModel, RegulationSignal, SignalHold};
use crate::regtrack::{
    desired_power, track_step, TrackInput, TrackerConfig, TrackerState, TrackingRecord,
};

/// Open-loop tracking test: fixed baseline and capacities, constant weather
/// and internal gain, no thermal supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayConfig {
    pub plant: PlantParams,
    pub tracker: TrackerConfig,
    pub baseline_w: f64,
    pub r_up_w: f64,
    pub r_down_w: f64,
    /// Replay length; `None` uses the whole signal.
    pub duration_s: Option<f64>,
    /// Delivery delay; `None` applies the signal immediately.
    pub delay: Option<DelayModel>,
    pub weather: WeatherSample,
    pub internal_gain_w: f64,
    pub room_c: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            tracker: TrackerConfig::default(),
            baseline_w: 500.0,
            r_up_w: 250.0,
            r_down_w: 250.0,
            duration_s: None,
            delay: None,
            weather: WeatherSample {
                t_amb_c: 28.0,
                solar_w_m2: 0.0,
            },
            internal_gain_w: 1000.0,
            room_c: 23.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub records: Vec<TrackingRecord>,
    pub final_state: PlantState,
}

/// Drives the fan with the tracker alone along `signal` on the 4 s tick.
pub fn replay_tracking(signal: &RegulationSignal, cfg: &ReplayConfig) -> Result<ReplayOutcome> {
    let fan = &cfg.plant.fan;
    let (p_min, p_max) = (fan.min_power(), fan.max_power());
    if !(cfg.baseline_w >= p_min && cfg.baseline_w <= p_max) {
        return Err(Error::InvalidArgument(format!(
            "baseline {} W outside the fan range [{p_min}, {p_max}] W",
            cfg.baseline_w
        )));
    }
    if !(cfg.r_up_w >= 0.0 && cfg.r_down_w >= 0.0) {
        return Err(Error::InvalidArgument(
            "capacities must be non-negative".into(),
        ));
    }
    let duration = cfg
        .duration_s
        .unwrap_or(signal.duration_s())
        .min(signal.duration_s());
    let mut hold = match &cfg.delay {
        Some(d) => Some(SignalHold::from_signal(signal, d)?),
        None => None,
    };
    let speed0 = fan.flow_to_speed(fan.fan_power_inverse(cfg.baseline_w).flow_kg_s);
    let mut plant = PlantState::new(&cfg.plant, cfg.room_c, cfg.room_c, speed0);
    let mut tracker = TrackerState::new(fan, &cfg.tracker, speed0);
    let n = (duration / TICK_S).floor() as usize;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * TICK_S;
        let w_ref = signal.value_at(t);
        let w_seen = hold.as_mut().map_or(w_ref, |h| h.value_at(t));
        let seen = desired_power(
            cfg.baseline_w,
            w_seen,
            cfg.r_up_w,
            cfg.r_down_w,
            p_min,
            p_max,
        );
        let reference = desired_power(
            cfg.baseline_w,
            w_ref,
            cfg.r_up_w,
            cfg.r_down_w,
            p_min,
            p_max,
        );
        let p_f = plant.fan_power_w;
        tracker = track_step(
            &tracker,
            &TrackInput {
                p_d_w: seen.p_d_w,
                p_f_w: p_f,
                r_u_w: cfg.r_up_w,
                r_d_w: cfg.r_down_w,
            },
            fan,
            &cfg.tracker,
        );
        records.push(TrackingRecord::new(
            t,
            w_ref,
            cfg.baseline_w,
            cfg.r_up_w,
            cfg.r_down_w,
            reference.p_d_w,
            p_f,
            tracker.mode,
        ));
        plant = step_plant(
            &cfg.plant,
            &plant,
            tracker.last_cmd,
            cfg.weather,
            cfg.internal_gain_w,
            TICK_S,
        )?;
    }
    Ok(ReplayOutcome {
        records,
        final_state: plant,
    })
}
