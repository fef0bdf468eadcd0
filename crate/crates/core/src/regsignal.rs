//! Normalized regulation signals: loading, decimation, delayed replay and
//! synthetic generators.
//!
//! A [`RegulationSignal`] is immutable once built. Delivery delays are modeled
//! by [`replay`], which stamps every sample with the time it becomes visible
//! to the controller; [`SignalHold`] then implements the stale-sample hold a
//! gateway pushing the latest value would exhibit.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::csvio::{self, num};
use crate::error::{Error, Result};

pub const SIGNAL_HEADER: [&str; 2] = ["t_s", "w"];

/// One-sided 95% quantile of the standard normal distribution.
const Z95: f64 = 1.644_853_626_951_472_2;

const PERIOD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSample {
    /// Seconds since experiment start.
    pub t: f64,
    /// Normalized regulation value in [-1, 1].
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegulationSignal {
    period_s: f64,
    samples: Vec<SignalSample>,
}

impl RegulationSignal {
    /// Builds a signal from regularly spaced samples.
    pub fn new(samples: Vec<SignalSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySeries);
        }
        for s in &samples {
            if !(-1.0..=1.0).contains(&s.w) || !s.t.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "sample at t={} has w={} outside [-1, 1]",
                    s.t, s.w
                )));
            }
        }
        let period_s = regular_period(&samples).map_err(Error::InvalidArgument)?;
        Ok(Self { period_s, samples })
    }

    /// Builds a signal of `values` spaced `period_s` apart starting at t = 0.
    pub fn from_values(period_s: f64, values: &[f64]) -> Result<Self> {
        if period_s <= 0.0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        let samples = values
            .iter()
            .enumerate()
            .map(|(i, &w)| SignalSample {
                t: i as f64 * period_s,
                w,
            })
            .collect();
        let mut sig = Self::new(samples)?;
        sig.period_s = period_s;
        Ok(sig)
    }

    pub fn period_s(&self) -> f64 {
        self.period_s
    }

    pub fn samples(&self) -> &[SignalSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 * self.period_s
    }

    /// Value of the most recent sample at or before `t` (zero before start).
    pub fn value_at(&self, t: f64) -> f64 {
        let t0 = self.samples[0].t;
        if t < t0 {
            return 0.0;
        }
        let idx = (((t - t0) / self.period_s) + PERIOD_TOL).floor() as usize;
        self.samples[idx.min(self.samples.len() - 1)].w
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        csvio::write_rows(
            path,
            &SIGNAL_HEADER,
            self.samples.iter().map(|s| vec![num(s.t), num(s.w)]),
        )
    }
}

fn regular_period(samples: &[SignalSample]) -> std::result::Result<f64, String> {
    if samples.len() < 2 {
        return Ok(1.0);
    }
    let period = samples[1].t - samples[0].t;
    if period <= 0.0 {
        return Err("timestamps not strictly increasing".into());
    }
    for (i, pair) in samples.windows(2).enumerate() {
        let dt = pair[1].t - pair[0].t;
        if dt <= 0.0 {
            return Err(format!(
                "timestamps not strictly increasing at sample {}",
                i + 1
            ));
        }
        if (dt - period).abs() > PERIOD_TOL * period.max(1.0) {
            return Err(format!(
                "irregular spacing at sample {}: {dt} s vs period {period} s",
                i + 1
            ));
        }
    }
    Ok(period)
}

/// Reads a `t_s,w` signal file.
pub fn load_signal_csv(path: &Path) -> Result<RegulationSignal> {
    let rows = csvio::read_rows(path, &SIGNAL_HEADER)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut last_t = f64::NEG_INFINITY;
    for row in &rows {
        let t = row.f64(path, 0)?;
        let w = row.f64(path, 1)?;
        if !(-1.0..=1.0).contains(&w) {
            return Err(Error::OutOfRange {
                path: path.to_path_buf(),
                line: row.line,
                value: w,
                lo: -1.0,
                hi: 1.0,
            });
        }
        if t <= last_t {
            return Err(Error::Ordering {
                path: path.to_path_buf(),
                line: row.line,
            });
        }
        last_t = t;
        samples.push(SignalSample { t, w });
    }
    if samples.is_empty() {
        return Err(csvio::parse_err(path, 1, "signal file has no samples"));
    }
    let period_s = regular_period(&samples).map_err(|m| csvio::parse_err(path, 0, m))?;
    Ok(RegulationSignal { period_s, samples })
}

/// Keeps every `target/source`-th sample starting from the first one.
pub fn downsample(signal: &RegulationSignal, target_period_s: f64) -> Result<RegulationSignal> {
    let ratio = target_period_s / signal.period_s;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "target period {target_period_s} s is not an integer multiple of {} s",
            signal.period_s
        )));
    }
    let step = rounded as usize;
    Ok(RegulationSignal {
        period_s: signal.period_s * rounded,
        samples: signal.samples.iter().step_by(step).copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayKind {
    Constant,
    /// Lognormal fitted to `mean_s` and `p95_s` by matching the mean and the
    /// 95% quantile.
    Lognormal,
    /// Bin edges (seconds) and relative weights; delays drawn uniformly
    /// within the selected bin.
    EmpiricalHistogram {
        edges_s: Vec<f64>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub mean_s: f64,
    pub p95_s: f64,
    pub seed: u64,
    /// Upper clamp on sampled delays; `None` disables it.
    pub outlier_cap_s: Option<f64>,
}

impl DelayModel {
    pub fn constant(delay_s: f64) -> Self {
        Self {
            kind: DelayKind::Constant,
            mean_s: delay_s,
            p95_s: delay_s,
            seed: 0,
            outlier_cap_s: None,
        }
    }

    pub fn lognormal(mean_s: f64, p95_s: f64, seed: u64) -> Self {
        Self {
            kind: DelayKind::Lognormal,
            mean_s,
            p95_s,
            seed,
            outlier_cap_s: Some(5.0),
        }
    }

    /// Delay statistics observed during the field experiment.
    pub fn field_default(seed: u64) -> Self {
        Self::lognormal(2.89, 2.99, seed)
    }

    /// (mu, sigma) of the underlying normal for the lognormal kind.
    pub fn lognormal_params(&self) -> Result<(f64, f64)> {
        if self.mean_s <= 0.0 || self.p95_s <= 0.0 {
            return Err(Error::InvalidArgument(
                "delay mean and p95 must be positive".into(),
            ));
        }
        let r = (self.p95_s / self.mean_s).ln();
        let disc = Z95 * Z95 - 2.0 * r;
        if r < 0.0 || disc < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "no lognormal with mean {} s and p95 {} s",
                self.mean_s, self.p95_s
            )));
        }
        let sigma = Z95 - disc.sqrt();
        let mu = self.mean_s.ln() - 0.5 * sigma * sigma;
        Ok((mu, sigma))
    }

    pub fn sampler(&self) -> Result<DelaySampler> {
        let inner = match &self.kind {
            DelayKind::Constant => {
                if self.mean_s < 0.0 {
                    return Err(Error::InvalidArgument("negative constant delay".into()));
                }
                SamplerKind::Constant(self.mean_s)
            }
            DelayKind::Lognormal => {
                let (mu, sigma) = self.lognormal_params()?;
                let dist = LogNormal::new(mu, sigma)
                    .map_err(|e| Error::InvalidArgument(format!("lognormal: {e}")))?;
                SamplerKind::Lognormal(dist)
            }
            DelayKind::EmpiricalHistogram { edges_s, weights } => {
                if edges_s.len() != weights.len() + 1 || weights.is_empty() {
                    return Err(Error::InvalidArgument(
                        "histogram needs one more edge than weights".into(),
                    ));
                }
                if edges_s.windows(2).any(|e| e[1] <= e[0]) || edges_s[0] < 0.0 {
                    return Err(Error::InvalidArgument(
                        "histogram edges must increase from >= 0".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|w| *w < 0.0) || total <= 0.0 {
                    return Err(Error::InvalidArgument(
                        "histogram weights must be positive".into(),
                    ));
                }
                let mut acc = 0.0;
                let cdf = weights
                    .iter()
                    .map(|w| {
                        acc += w / total;
                        acc
                    })
                    .collect();
                SamplerKind::Histogram {
                    edges: edges_s.clone(),
                    cdf,
                }
            }
        };
        Ok(DelaySampler {
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            cap: self.outlier_cap_s,
            inner,
        })
    }
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Constant(f64),
    Lognormal(LogNormal<f64>),
    Histogram { edges: Vec<f64>, cdf: Vec<f64> },
}

/// Deterministic stream of delays for a [`DelayModel`].
#[derive(Debug, Clone)]
pub struct DelaySampler {
    rng: ChaCha8Rng,
    cap: Option<f64>,
    inner: SamplerKind,
}

impl DelaySampler {
    pub fn next_delay(&mut self) -> f64 {
        let d = match &self.inner {
            SamplerKind::Constant(d) => *d,
            SamplerKind::Lognormal(dist) => dist.sample(&mut self.rng),
            SamplerKind::Histogram { edges, cdf } => {
                let u: f64 = self.rng.random();
                let bin = cdf.iter().position(|c| u <= *c).unwrap_or(cdf.len() - 1);
                let v: f64 = self.rng.random();
                edges[bin] + v * (edges[bin + 1] - edges[bin])
            }
        };
        let d = d.max(0.0);
        match self.cap {
            Some(cap) => d.min(cap),
            None => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayedSample {
    pub t_emitted: f64,
    pub t_available: f64,
    pub w: f64,
}

/// Stamps each sample with its availability time.
pub fn replay<'a>(
    signal: &'a RegulationSignal,
    delay: &DelayModel,
) -> Result<impl Iterator<Item = ReplayedSample> + 'a> {
    let mut sampler = delay.sampler()?;
    Ok(signal.samples.iter().map(move |s| ReplayedSample {
        t_emitted: s.t,
        t_available: s.t + sampler.next_delay(),
        w: s.w,
    }))
}

/// Consumer side of a replayed stream: at time `t` it exposes the most
/// recently emitted sample that has already arrived.
#[derive(Debug, Clone)]
pub struct SignalHold {
    stream: Vec<ReplayedSample>,
    /// Index of the first sample not yet emitted at the last query time.
    frontier: usize,
    held: Option<usize>,
    last_t: f64,
}

impl SignalHold {
    pub fn new(stream: impl IntoIterator<Item = ReplayedSample>) -> Self {
        Self {
            stream: stream.into_iter().collect(),
            frontier: 0,
            held: None,
            last_t: f64::NEG_INFINITY,
        }
    }

    pub fn from_signal(signal: &RegulationSignal, delay: &DelayModel) -> Result<Self> {
        Ok(Self::new(replay(signal, delay)?))
    }

    /// Held sample at time `t`; queries must be non-decreasing in `t`.
    pub fn sample_at(&mut self, t: f64) -> Option<ReplayedSample> {
        debug_assert!(t >= self.last_t, "hold queried backwards in time");
        self.last_t = t;
        while self.frontier < self.stream.len() && self.stream[self.frontier].t_emitted <= t {
            self.frontier += 1;
        }
        let floor = self.held.map_or(0, |h| h + 1);
        for idx in (floor..self.frontier).rev() {
            if self.stream[idx].t_available <= t {
                self.held = Some(idx);
                break;
            }
        }
        self.held.map(|i| self.stream[i])
    }

    /// Held value at `t`, zero until the first sample arrives.
    pub fn value_at(&mut self, t: f64) -> f64 {
        self.sample_at(t).map_or(0.0, |s| s.w)
    }
}

/// Triangle wave between -1 and 1 with the given cycle length.
pub fn triangle_wave(duration_s: f64, period_s: f64, cycle_s: f64) -> Result<RegulationSignal> {
    let n = (duration_s / period_s).round() as usize;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let phase = (i as f64 * period_s / cycle_s).fract();
            let v = if phase < 0.5 {
                -1.0 + 4.0 * phase
            } else {
                3.0 - 4.0 * phase
            };
            v.clamp(-1.0, 1.0)
        })
        .collect();
    RegulationSignal::from_values(period_s, &values)
}

/// RegD-like synthetic signal: alternating ramps and plateaus towards random
/// targets, with targets biased against the accumulated energy so that the
/// signal stays approximately energy-neutral.
pub fn synthetic_regd(duration_s: f64, period_s: f64, seed: u64) -> Result<RegulationSignal> {
    let n = (duration_s / period_s).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut w = 0.0_f64;
    let mut energy = 0.0_f64;
    let mut target = 0.0_f64;
    let mut rate = 0.01_f64;
    let mut hold_left = 0.0_f64;
    // Energy horizon for the neutrality feedback, in seconds of full output.
    let energy_scale = 600.0;
    for _ in 0..n {
        values.push(w);
        energy += w * period_s;
        if hold_left > 0.0 {
            hold_left -= period_s;
            continue;
        }
        let step = rate * period_s;
        if (target - w).abs() <= step {
            w = target;
            hold_left = -45.0 * (1.0 - rng.random::<f64>()).ln();
            let bias = (energy / energy_scale).clamp(-0.8, 0.8);
            target = (rng.random_range(-1.0..=1.0) - bias).clamp(-1.0, 1.0);
            rate = rng.random_range(0.002..0.012);
        } else {
            w += step * (target - w).signum();
        }
    }
    RegulationSignal::from_values(period_s, &values)
}
