//! Evaluation of regulation tracking: aggregate control errors, hourly PJM
//! performance scores, the reserve-threshold sweep and the energy cost of
//! providing regulation.

use std::path::Path;

use crate::csvio::{self, num};
use crate::error::{Error, Result};
use crate::regtrack::TrackingRecord;
use crate::scheduler::HourReserve;

pub const SCORES_HEADER: [&str; 7] = ["hour", "S_c", "S_d", "S_p", "S_tot", "tau_star_s", "valid"];
pub const SWEEP_HEADER: [&str; 7] = [
    "R_thr_W", "n", "e_me_W", "e_mae_W", "e_rmse_W", "e_t_mape", "e_r_mape",
];
pub const REPORT_HEADER: [&str; 2] = ["metric", "value"];

/// Aggregate errors over a tracking run. MAPE values are fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingMetrics {
    pub e_me_w: f64,
    pub e_mae_w: f64,
    pub e_rmse_w: f64,
    pub e_t_mape: f64,
    pub e_r_mape: f64,
    pub n_exp: usize,
    /// Samples left out of `e_t_mape` because P_d = 0.
    pub t_skipped: usize,
    /// Samples left out of `e_r_mape` because the active capacity is 0.
    pub r_skipped: usize,
}

/// Capacity that normalizes the reserve error at a sample.
fn active_capacity(r: &TrackingRecord) -> f64 {
    if r.w < 0.0 {
        r.r_u_w
    } else {
        r.r_d_w
    }
}

pub fn tracking_metrics(records: &[TrackingRecord]) -> Result<TrackingMetrics> {
    if records.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = records.len() as f64;
    let (mut sum, mut abs, mut sq) = (0.0, 0.0, 0.0);
    let (mut t_sum, mut t_n, mut r_sum, mut r_n) = (0.0, 0usize, 0.0, 0usize);
    for r in records {
        let e = r.e_c_w;
        sum += e;
        abs += e.abs();
        sq += e * e;
        if r.p_d_w != 0.0 {
            t_sum += (e / r.p_d_w).abs();
            t_n += 1;
        }
        let cap = active_capacity(r);
        if cap != 0.0 {
            r_sum += (e / cap).abs();
            r_n += 1;
        }
    }
    let mean = |s: f64, k: usize| if k == 0 { 0.0 } else { s / k as f64 };
    Ok(TrackingMetrics {
        e_me_w: sum / n,
        e_mae_w: abs / n,
        e_rmse_w: (sq / n).sqrt(),
        e_t_mape: mean(t_sum, t_n),
        e_r_mape: mean(r_sum, r_n),
        n_exp: records.len(),
        t_skipped: records.len() - t_n,
        r_skipped: records.len() - r_n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PjmConfig {
    pub hour_s: f64,
    /// Grid of the correlation search and of the resampled series, s.
    pub grid_s: f64,
    pub max_shift_s: f64,
    /// Floor on |P̄_d| in the precision score, W.
    pub min_mean_power_w: f64,
    /// A flat hour correlates perfectly when the RMS error is below this, W.
    pub flat_rms_w: f64,
}

impl Default for PjmConfig {
    fn default() -> Self {
        Self {
            hour_s: 3600.0,
            grid_s: 10.0,
            max_shift_s: 300.0,
            min_mean_power_w: 1.0,
            flat_rms_w: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PjmScore {
    pub hour: usize,
    pub s_c: f64,
    pub s_d: f64,
    pub s_p: f64,
    pub s_tot: f64,
    pub tau_star_s: f64,
    /// Reserve non-zero and samples present; only valid hours are averaged.
    pub valid: bool,
    /// Several shifts reached the maximum correlation.
    pub tie: bool,
    /// P_d or P_f constant over the hour (correlation undefined).
    pub flat: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PjmReport {
    pub hours: Vec<PjmScore>,
    /// Averages over valid hours: S_c, S_d, S_p, S_tot.
    pub average: Option<[f64; 4]>,
    pub valid_hours: usize,
}

/// Series averaged onto a uniform grid. Bin j covers [t0 + j g, t0 + (j+1) g).
pub fn resample_mean(t: &[f64], v: &[f64], t0: f64, grid_s: f64, bins: usize) -> Vec<f64> {
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (&ti, &vi) in t.iter().zip(v) {
        let j = ((ti - t0) / grid_s + 1e-9).floor();
        if j >= 0.0 && (j as usize) < bins {
            sum[j as usize] += vi;
            count[j as usize] += 1;
        }
    }
    let mut out = Vec::with_capacity(bins);
    let mut last = f64::NAN;
    for j in 0..bins {
        if count[j] > 0 {
            last = sum[j] / count[j] as f64;
        }
        out.push(last);
    }
    // Leading empty bins take the first available value.
    if let Some(first) = out.iter().copied().find(|v| v.is_finite()) {
        for v in out.iter_mut().take_while(|v| !v.is_finite()) {
            *v = first;
        }
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn is_flat(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Scores one hour of grid-aligned desired and fan power.
pub fn score_hour(hour: usize, p_d: &[f64], p_f: &[f64], valid: bool, cfg: &PjmConfig) -> PjmScore {
    let n = p_d.len();
    let max_shift = (cfg.max_shift_s / cfg.grid_s).round() as usize;
    let flat = n < 2 || is_flat(p_d) || is_flat(p_f);
    let (mut s_c, mut tau, mut tie) = (f64::NEG_INFINITY, 0usize, false);
    if flat {
        let rms = (p_d
            .iter()
            .zip(p_f)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / n.max(1) as f64)
            .sqrt();
        s_c = if rms < cfg.flat_rms_w { 1.0 } else { 0.0 };
    } else {
        for s in 0..=max_shift.min(n - 2) {
            let r = pearson(&p_d[..n - s], &p_f[s..]).unwrap_or(0.0);
            if r > s_c {
                s_c = r;
                tau = s;
                tie = false;
            } else if r == s_c {
                tie = true;
            }
        }
    }
    let s_c = s_c.clamp(0.0, 1.0);
    let tau_s = tau as f64 * cfg.grid_s;
    let s_d = ((tau_s - cfg.max_shift_s) / cfg.max_shift_s).abs();
    let mean_pd = p_d.iter().sum::<f64>() / n.max(1) as f64;
    let denom = mean_pd.abs().max(cfg.min_mean_power_w);
    let s_p = (1.0
        - p_d
            .iter()
            .zip(p_f)
            .map(|(a, b)| ((a - b) / denom).abs())
            .sum::<f64>()
            / n.max(1) as f64)
        .max(0.0);
    PjmScore {
        hour,
        s_c,
        s_d,
        s_p,
        s_tot: (s_c + s_d + s_p) / 3.0,
        tau_star_s: tau_s,
        valid: valid && n > 0,
        tie,
        flat,
    }
}

/// Hourly scores of tick-level series starting at an hour boundary
/// `t[0] - (t[0] mod hour)`. Hour h uses `reserves[h]` for validity.
pub fn pjm_scores(
    t: &[f64],
    p_d: &[f64],
    p_f: &[f64],
    reserves: &[HourReserve],
    cfg: &PjmConfig,
) -> Result<PjmReport> {
    if t.is_empty() {
        return Err(Error::EmptySeries);
    }
    if p_d.len() != t.len() || p_f.len() != t.len() {
        return Err(Error::Misaligned(format!(
            "{} times, {} desired, {} fan samples",
            t.len(),
            p_d.len(),
            p_f.len()
        )));
    }
    check_uniform(t)?;
    let first_hour = (t[0] / cfg.hour_s + 1e-9).floor() as usize;
    let last_hour = (t[t.len() - 1] / cfg.hour_s + 1e-9).floor() as usize;
    let bins = (cfg.hour_s / cfg.grid_s).round() as usize;
    let mut hours = Vec::new();
    let mut start = 0;
    for h in first_hour..=last_hour {
        let t0 = h as f64 * cfg.hour_s;
        let end = start + t[start..].partition_point(|&x| x < t0 + cfg.hour_s - 1e-9);
        if end == start {
            continue;
        }
        let (ts, ds, fs) = (&t[start..end], &p_d[start..end], &p_f[start..end]);
        // Only the part of the hour covered by samples is scored.
        let covered =
            (((ts[ts.len() - 1] - t0) / cfg.grid_s + 1e-9).floor() as usize + 1).min(bins);
        let skip = ((ts[0] - t0) / cfg.grid_s + 1e-9).floor() as usize;
        let d = resample_mean(ts, ds, t0, cfg.grid_s, covered);
        let f = resample_mean(ts, fs, t0, cfg.grid_s, covered);
        let r = reserves.get(h).copied().unwrap_or_default();
        let valid = r.r_up_w > 0.0 || r.r_down_w > 0.0;
        hours.push(score_hour(h, &d[skip..], &f[skip..], valid, cfg));
        start = end;
    }
    let valid: Vec<&PjmScore> = hours.iter().filter(|s| s.valid).collect();
    let average = (!valid.is_empty()).then(|| {
        let k = valid.len() as f64;
        let avg = |f: fn(&PjmScore) -> f64| valid.iter().map(|s| f(s)).sum::<f64>() / k;
        [
            avg(|s| s.s_c),
            avg(|s| s.s_d),
            avg(|s| s.s_p),
            avg(|s| s.s_tot),
        ]
    });
    Ok(PjmReport {
        valid_hours: valid.len(),
        hours,
        average,
    })
}

pub fn pjm_scores_records(
    records: &[TrackingRecord],
    reserves: &[HourReserve],
    cfg: &PjmConfig,
) -> Result<PjmReport> {
    let t: Vec<f64> = records.iter().map(|r| r.t_s).collect();
    let d: Vec<f64> = records.iter().map(|r| r.p_d_w).collect();
    let f: Vec<f64> = records.iter().map(|r| r.p_f_w).collect();
    pjm_scores(&t, &d, &f, reserves, cfg)
}

fn check_uniform(t: &[f64]) -> Result<()> {
    if t.len() < 2 {
        return Ok(());
    }
    let dt = t[1] - t[0];
    if !(dt > 0.0) {
        return Err(Error::Misaligned(format!(
            "non-increasing time at index 1: {}",
            t[1]
        )));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::Misaligned(format!(
                "sample period {} at index {}, expected {dt}",
                w[1] - w[0],
                i + 1
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold_w: f64,
    pub n: usize,
    /// None when no sample passes the filter.
    pub metrics: Option<TrackingMetrics>,
}

/// Metrics restricted to samples whose active capacity reaches each
/// threshold.
pub fn reserve_threshold_sweep(
    records: &[TrackingRecord],
    thresholds_w: &[f64],
) -> Result<Vec<SweepRow>> {
    if thresholds_w.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidArgument(
            "thresholds must be sorted ascending".into(),
        ));
    }
    thresholds_w
        .iter()
        .map(|&thr| {
            let subset: Vec<TrackingRecord> = records
                .iter()
                .filter(|r| active_capacity(r) >= thr)
                .copied()
                .collect();
            let metrics = if subset.is_empty() {
                None
            } else {
                Some(tracking_metrics(&subset)?)
            };
            Ok(SweepRow {
                threshold_w: thr,
                n: subset.len(),
                metrics,
            })
        })
        .collect()
}

/// Energy totals of one cell over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub fan_kwh: f64,
    pub cooling_kwh: f64,
    /// Water-side cooling integral, gpm·°F·h.
    pub cooling_gpm_f_h: f64,
    pub chiller_kwh: f64,
    pub mean_room_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Benchmark scheduled without reserves.
    Availability,
    /// Benchmark scheduled for reserves but not tracking.
    Utilization,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyReport {
    pub kind: LossKind,
    pub regulated: RunSummary,
    pub benchmark: RunSummary,
    /// (regulated - benchmark) / benchmark in percent.
    pub fan_loss_pct: f64,
    pub cooling_loss_pct: f64,
}

pub fn efficiency_report(
    regulated: &RunSummary,
    benchmark: &RunSummary,
    kind: LossKind,
) -> Result<EfficiencyReport> {
    if regulated.t_start_s != benchmark.t_start_s || regulated.t_end_s != benchmark.t_end_s {
        return Err(Error::Misaligned(format!(
            "windows [{}, {}] and [{}, {}] differ",
            regulated.t_start_s, regulated.t_end_s, benchmark.t_start_s, benchmark.t_end_s
        )));
    }
    let pct = |a: f64, b: f64| if b == 0.0 { 0.0 } else { 100.0 * (a - b) / b };
    Ok(EfficiencyReport {
        kind,
        regulated: *regulated,
        benchmark: *benchmark,
        fan_loss_pct: pct(regulated.fan_kwh, benchmark.fan_kwh),
        cooling_loss_pct: pct(regulated.cooling_kwh, benchmark.cooling_kwh),
    })
}

pub fn write_scores_csv(path: &Path, report: &PjmReport) -> Result<()> {
    csvio::write_rows(
        path,
        &SCORES_HEADER,
        report.hours.iter().map(|s| {
            vec![
                s.hour.to_string(),
                num(s.s_c),
                num(s.s_d),
                num(s.s_p),
                num(s.s_tot),
                num(s.tau_star_s),
                s.valid.to_string(),
            ]
        }),
    )
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    csvio::write_rows(
        path,
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            let mut v = vec![num(r.threshold_w), r.n.to_string()];
            match &r.metrics {
                Some(m) => {
                    v.extend([m.e_me_w, m.e_mae_w, m.e_rmse_w, m.e_t_mape, m.e_r_mape].map(num))
                }
                None => v.extend(std::iter::repeat_n(String::new(), 5)),
            }
            v
        }),
    )
}

/// report.csv rows: aggregate metrics and score averages.
pub fn report_rows(metrics: &TrackingMetrics, scores: &PjmReport) -> Vec<(String, String)> {
    let mut rows: Vec<(String, String)> = vec![
        ("e_me_W".into(), num(metrics.e_me_w)),
        ("e_mae_W".into(), num(metrics.e_mae_w)),
        ("e_rmse_W".into(), num(metrics.e_rmse_w)),
        ("e_t_mape".into(), num(metrics.e_t_mape)),
        ("e_r_mape".into(), num(metrics.e_r_mape)),
        ("N_exp".into(), metrics.n_exp.to_string()),
        ("e_t_skipped".into(), metrics.t_skipped.to_string()),
        ("e_r_skipped".into(), metrics.r_skipped.to_string()),
        ("valid_hours".into(), scores.valid_hours.to_string()),
    ];
    let names = ["S_c_avg", "S_d_avg", "S_p_avg", "S_tot_avg"];
    for (i, name) in names.iter().enumerate() {
        let v = scores.average.map_or(String::new(), |a| num(a[i]));
        rows.push((name.to_string(), v));
    }
    let flat = scores.hours.iter().filter(|s| s.valid && s.flat).count();
    let ties = scores.hours.iter().filter(|s| s.valid && s.tie).count();
    rows.push(("flat_hours".into(), flat.to_string()));
    rows.push(("tau_tie_hours".into(), ties.to_string()));
    rows.push((
        "flat_hour_rule".into(),
        "S_c = 1 if RMS(e_c) < 1 W else 0".into(),
    ));
    rows
}

pub fn write_report_csv(path: &Path, rows: &[(String, String)]) -> Result<()> {
    csvio::write_rows(
        path,
        &REPORT_HEADER,
        rows.iter().map(|(k, v)| vec![k.clone(), v.clone()]),
    )
}

pub fn read_report_csv(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(csvio::read_rows(path, &REPORT_HEADER)?
        .iter()
        .map(|r| (r.str(0).to_string(), r.str(1).to_string()))
        .collect())
}
