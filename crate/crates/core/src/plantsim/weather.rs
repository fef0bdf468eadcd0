//! Ambient temperature and irradiance traces at slot resolution, plus the
//! two-level internal-gain (heater) schedule.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csvio::{self, num};
use crate::error::{Error, Result};

pub const FORECAST_HEADER: [&str; 3] = ["t_s", "T_amb_C", "solar_Wm2"];

pub const DAY_S: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherSample {
    pub t_amb_c: f64,
    pub solar_w_m2: f64,
}

/// Per-slot actual and forecast weather covering the whole experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherTrace {
    pub slot_s: f64,
    pub actual: Vec<WeatherSample>,
    pub forecast: Vec<WeatherSample>,
}

/// Shape of the synthetic weather generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherProfile {
    pub mean_temp_c: f64,
    pub amplitude_c: f64,
    /// Hour of the daily maximum.
    pub peak_hour: f64,
    /// Standard deviation of the day-to-day mean shift, °C.
    pub day_spread_c: f64,
    pub peak_solar_w_m2: f64,
    pub sunrise_h: f64,
    pub sunset_h: f64,
    /// Standard deviation of forecast error per slot, °C (on top of bias).
    pub forecast_noise_c: f64,
}

impl Default for WeatherProfile {
    fn default() -> Self {
        Self {
            mean_temp_c: 21.0,
            amplitude_c: 5.0,
            peak_hour: 15.0,
            day_spread_c: 1.5,
            peak_solar_w_m2: 650.0,
            sunrise_h: 7.0,
            sunset_h: 19.0,
            forecast_noise_c: 0.3,
        }
    }
}

/// Additive forecast-bias injection: the actual ambient temperature exceeds
/// the forecast by `bias_c`, ramped in linearly over `ramp_h` hours from
/// `start_h` on each affected day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastBias {
    pub bias_c: f64,
    pub start_h: f64,
    pub ramp_h: f64,
    /// Days (0-based) on which the bias applies; empty means every day.
    pub days: Vec<usize>,
}

impl Default for ForecastBias {
    fn default() -> Self {
        Self {
            bias_c: 0.0,
            start_h: 6.0,
            ramp_h: 4.0,
            days: Vec::new(),
        }
    }
}

impl ForecastBias {
    pub fn at(&self, t_s: f64) -> f64 {
        if self.bias_c == 0.0 {
            return 0.0;
        }
        let day = (t_s / DAY_S).floor() as usize;
        if !self.days.is_empty() && !self.days.contains(&day) {
            return 0.0;
        }
        let h = (t_s % DAY_S) / 3600.0;
        let ramp = if self.ramp_h > 0.0 {
            ((h - self.start_h) / self.ramp_h).clamp(0.0, 1.0)
        } else if h >= self.start_h {
            1.0
        } else {
            0.0
        };
        self.bias_c * ramp
    }
}

fn clear_sky(profile: &WeatherProfile, h: f64) -> f64 {
    if h <= profile.sunrise_h || h >= profile.sunset_h {
        return 0.0;
    }
    let x = (h - profile.sunrise_h) / (profile.sunset_h - profile.sunrise_h);
    profile.peak_solar_w_m2 * (std::f64::consts::PI * x).sin()
}

impl WeatherTrace {
    /// Seeded synthetic trace. The forecast is the smooth daily profile plus
    /// small noise; actuals add the configured bias on top of the forecast.
    pub fn synthetic(
        days: usize,
        slot_s: f64,
        profile: &WeatherProfile,
        bias: &ForecastBias,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots_per_day = (DAY_S / slot_s).round() as usize;
        let mut forecast = Vec::with_capacity(days * slots_per_day);
        let mut actual = Vec::with_capacity(days * slots_per_day);
        for _day in 0..days {
            let shift = profile.day_spread_c * (rng.random::<f64>() * 2.0 - 1.0);
            let cloud = 0.75 + 0.25 * rng.random::<f64>();
            for s in 0..slots_per_day {
                let t = (forecast.len() as f64) * slot_s;
                let h = (s as f64 + 0.5) * slot_s / 3600.0;
                let phase = 2.0 * std::f64::consts::PI * (h - profile.peak_hour) / 24.0;
                let temp = profile.mean_temp_c + shift + profile.amplitude_c * phase.cos();
                let solar = cloud * clear_sky(profile, h);
                let fc = WeatherSample {
                    t_amb_c: temp,
                    solar_w_m2: solar,
                };
                let noise = profile.forecast_noise_c * (rng.random::<f64>() * 2.0 - 1.0);
                let solar_noise = 1.0 + 0.05 * (rng.random::<f64>() * 2.0 - 1.0);
                forecast.push(fc);
                actual.push(WeatherSample {
                    t_amb_c: temp + noise + bias.at(t),
                    solar_w_m2: (solar * solar_noise).max(0.0),
                });
            }
        }
        Self {
            slot_s,
            actual,
            forecast,
        }
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    fn slot_of(&self, t_s: f64) -> usize {
        ((t_s / self.slot_s).floor().max(0.0) as usize).min(self.actual.len() - 1)
    }

    pub fn actual_at(&self, t_s: f64) -> WeatherSample {
        self.actual[self.slot_of(t_s)]
    }

    pub fn forecast_at(&self, t_s: f64) -> WeatherSample {
        self.forecast[self.slot_of(t_s)]
    }

    pub fn forecast_slots(&self, first: usize, count: usize) -> &[WeatherSample] {
        let end = (first + count).min(self.forecast.len());
        &self.forecast[first.min(end)..end]
    }

    pub fn actual_slots(&self, first: usize, count: usize) -> &[WeatherSample] {
        let end = (first + count).min(self.actual.len());
        &self.actual[first.min(end)..end]
    }

    pub fn write_forecast_csv(&self, path: &Path) -> Result<()> {
        write_weather_csv(path, self.slot_s, &self.forecast)
    }
}

pub fn write_weather_csv(path: &Path, slot_s: f64, samples: &[WeatherSample]) -> Result<()> {
    csvio::write_rows(
        path,
        &FORECAST_HEADER,
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| vec![num(i as f64 * slot_s), num(s.t_amb_c), num(s.solar_w_m2)]),
    )
}

pub fn read_forecast_csv(path: &Path) -> Result<Vec<(f64, WeatherSample)>> {
    let rows = csvio::read_rows(path, &FORECAST_HEADER)?;
    let mut out: Vec<(f64, WeatherSample)> = Vec::with_capacity(rows.len());
    for row in rows {
        let t = row.f64(path, 0)?;
        if out.last().is_some_and(|(prev, _)| t <= *prev) {
            return Err(Error::Ordering {
                path: path.to_path_buf(),
                line: row.line,
            });
        }
        out.push((
            t,
            WeatherSample {
                t_amb_c: row.f64(path, 1)?,
                solar_w_m2: row.f64(path, 2)?,
            },
        ));
    }
    Ok(out)
}

/// Internal gains: `high_w` during working hours, `low_w` otherwise, with
/// optional uniform noise redrawn every `noise_period_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeaterSchedule {
    pub high_w: f64,
    pub low_w: f64,
    pub work_start_h: f64,
    pub work_end_h: f64,
    pub noise_frac: f64,
    pub noise_period_s: f64,
}

impl Default for HeaterSchedule {
    fn default() -> Self {
        Self {
            high_w: 2500.0,
            low_w: 1500.0,
            work_start_h: 8.0,
            work_end_h: 18.0,
            noise_frac: 0.05,
            noise_period_s: 60.0,
        }
    }
}

impl HeaterSchedule {
    pub fn is_working(&self, t_s: f64) -> bool {
        let h = (t_s % DAY_S) / 3600.0;
        h >= self.work_start_h && h < self.work_end_h
    }

    pub fn nominal_w(&self, t_s: f64) -> f64 {
        if self.is_working(t_s) {
            self.high_w
        } else {
            self.low_w
        }
    }

    /// Mean nominal gain over [t0, t0 + len).
    pub fn slot_mean_w(&self, t0: f64, len: f64) -> f64 {
        let n = 30;
        (0..n)
            .map(|i| self.nominal_w(t0 + (i as f64 + 0.5) * len / n as f64))
            .sum::<f64>()
            / n as f64
    }
}

/// Seeded realization of a [`HeaterSchedule`].
#[derive(Debug, Clone)]
pub struct HeaterProcess {
    schedule: HeaterSchedule,
    rng: ChaCha8Rng,
    period_index: Option<i64>,
    factor: f64,
}

impl HeaterProcess {
    pub fn new(schedule: HeaterSchedule, seed: u64) -> Self {
        Self {
            schedule,
            rng: ChaCha8Rng::seed_from_u64(seed),
            period_index: None,
            factor: 1.0,
        }
    }

    /// Gain at `t_s`; must be called with non-decreasing times.
    pub fn gain_w(&mut self, t_s: f64) -> f64 {
        let nominal = self.schedule.nominal_w(t_s);
        if self.schedule.noise_frac <= 0.0 {
            return nominal;
        }
        let idx = (t_s / self.schedule.noise_period_s).floor() as i64;
        if self.period_index != Some(idx) {
            self.period_index = Some(idx);
            let u: f64 = self.rng.random::<f64>() * 2.0 - 1.0;
            self.factor = 1.0 + self.schedule.noise_frac * u;
        }
        nominal * self.factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_trace_covers_horizon() {
        let w = WeatherTrace::synthetic(
            2,
            900.0,
            &WeatherProfile::default(),
            &ForecastBias::default(),
            7,
        );
        assert_eq!(w.len(), 192);
        assert_eq!(w.forecast.len(), 192);
        assert!(w.actual.iter().all(|s| s.solar_w_m2 >= 0.0));
        let night = w.actual_at(3.0 * 3600.0);
        assert_eq!(night.solar_w_m2, 0.0);
    }

    #[test]
    fn bias_ramps_in() {
        let b = ForecastBias {
            bias_c: 2.0,
            start_h: 6.0,
            ramp_h: 4.0,
            days: vec![1],
        };
        assert_eq!(b.at(12.0 * 3600.0), 0.0);
        assert_eq!(b.at(DAY_S + 5.0 * 3600.0), 0.0);
        assert!((b.at(DAY_S + 8.0 * 3600.0) - 1.0).abs() < 1e-12);
        assert_eq!(b.at(DAY_S + 14.0 * 3600.0), 2.0);
    }

    #[test]
    fn heater_noise_bounded_and_seeded() {
        let s = HeaterSchedule::default();
        let mut a = HeaterProcess::new(s.clone(), 3);
        let mut b = HeaterProcess::new(s.clone(), 3);
        for k in 0..5000 {
            let t = k as f64 * 4.0;
            let ga = a.gain_w(t);
            assert_eq!(ga, b.gain_w(t));
            let nominal = s.nominal_w(t);
            assert!((ga - nominal).abs() <= 0.05 * nominal + 1e-9);
        }
    }

    #[test]
    fn forecast_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forecast.csv");
        let w = WeatherTrace::synthetic(
            1,
            900.0,
            &WeatherProfile::default(),
            &ForecastBias::default(),
            1,
        );
        w.write_forecast_csv(&path).unwrap();
        let back = read_forecast_csv(&path).unwrap();
        assert_eq!(back.len(), 96);
        for (i, (t, s)) in back.iter().enumerate() {
            assert_eq!(*t, i as f64 * 900.0);
            assert_eq!(*s, w.forecast[i]);
        }
    }
}
