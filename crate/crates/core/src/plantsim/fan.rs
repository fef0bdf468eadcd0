//! Supply fan: speed/flow relation, power curve and its inverse, the
//! piecewise-affine approximation used by the optimizers, and the SAT heat
//! gain from fan rotation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FanModel {
    pub rated_power_w: f64,
    /// Air mass flow at 100% speed, kg/s.
    pub flow_gain_kg_s: f64,
    /// Power polynomial in mass flow: c0 + c1 m + c2 m^2 + c3 m^3 (W).
    pub power_coeffs: [f64; 4],
    pub min_speed: f64,
    pub max_speed: f64,
    pub heat_gain: HeatGainCurve,
}

impl Default for FanModel {
    fn default() -> Self {
        Self::cubic(2500.0, 1.2)
    }
}

/// Result of inverting the power curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowLookup {
    pub flow_kg_s: f64,
    /// The requested power lay outside the operating range and was clamped.
    pub clamped: bool,
}

impl FanModel {
    /// Pure cube law through the rated point (rated power at 100% speed).
    pub fn cubic(rated_power_w: f64, flow_gain_kg_s: f64) -> Self {
        Self {
            rated_power_w,
            flow_gain_kg_s,
            power_coeffs: [0.0, 0.0, 0.0, rated_power_w / flow_gain_kg_s.powi(3)],
            min_speed: 0.10,
            max_speed: 0.90,
            heat_gain: HeatGainCurve::default(),
        }
    }

    pub fn speed_to_flow(&self, speed: f64) -> f64 {
        speed * self.flow_gain_kg_s
    }

    pub fn flow_to_speed(&self, flow: f64) -> f64 {
        flow / self.flow_gain_kg_s
    }

    pub fn min_flow(&self) -> f64 {
        self.speed_to_flow(self.min_speed)
    }

    pub fn max_flow(&self) -> f64 {
        self.speed_to_flow(self.max_speed)
    }

    pub fn fan_power(&self, flow_kg_s: f64) -> f64 {
        let [c0, c1, c2, c3] = self.power_coeffs;
        let m = flow_kg_s.max(0.0);
        c0 + m * (c1 + m * (c2 + m * c3))
    }

    /// dP/dm at `flow_kg_s`.
    pub fn power_slope(&self, flow_kg_s: f64) -> f64 {
        let [_, c1, c2, c3] = self.power_coeffs;
        let m = flow_kg_s.max(0.0);
        c1 + m * (2.0 * c2 + 3.0 * c3 * m)
    }

    pub fn power_at_speed(&self, speed: f64) -> f64 {
        self.fan_power(self.speed_to_flow(speed))
    }

    pub fn min_power(&self) -> f64 {
        self.fan_power(self.min_flow())
    }

    pub fn max_power(&self) -> f64 {
        self.fan_power(self.max_flow())
    }

    /// Flow producing `power_w`, restricted to the [min, max] speed range.
    pub fn fan_power_inverse(&self, power_w: f64) -> FlowLookup {
        let (lo, hi) = (self.min_flow(), self.max_flow());
        self.invert_on(power_w, lo, hi)
    }

    /// Inverse over the full physical range [0, 100% speed].
    pub fn fan_power_inverse_full(&self, power_w: f64) -> FlowLookup {
        self.invert_on(power_w, 0.0, self.flow_gain_kg_s)
    }

    fn invert_on(&self, power_w: f64, lo: f64, hi: f64) -> FlowLookup {
        let (p_lo, p_hi) = (self.fan_power(lo), self.fan_power(hi));
        if power_w <= p_lo {
            return FlowLookup {
                flow_kg_s: lo,
                clamped: power_w < p_lo,
            };
        }
        if power_w >= p_hi {
            return FlowLookup {
                flow_kg_s: hi,
                clamped: power_w > p_hi,
            };
        }
        // Safeguarded Newton on a monotone polynomial.
        let (mut a, mut b) = (lo, hi);
        let mut m = lo + (hi - lo) * (power_w - p_lo) / (p_hi - p_lo);
        for _ in 0..100 {
            let f = self.fan_power(m) - power_w;
            if f > 0.0 {
                b = m;
            } else {
                a = m;
            }
            let d = self.power_slope(m);
            let mut next = if d > 0.0 { m - f / d } else { f64::NAN };
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            if (next - m).abs() <= 1e-15 * m.abs().max(1e-12) {
                m = next;
                break;
            }
            m = next;
        }
        FlowLookup {
            flow_kg_s: m,
            clamped: false,
        }
    }

    /// Chord interpolation of the power curve on `segments` equal-width
    /// flow intervals spanning [`lo`, `hi`].
    pub fn piecewise_affine(&self, lo: f64, hi: f64, segments: usize) -> PiecewiseAffine {
        let segments = segments.max(1);
        let points = (0..=segments)
            .map(|i| {
                let m = lo + (hi - lo) * i as f64 / segments as f64;
                (m, self.fan_power(m))
            })
            .collect();
        PiecewiseAffine::new(points)
    }

    /// True when the power curve increases strictly over the speed range.
    pub fn is_monotone(&self) -> bool {
        let n = 200;
        (0..=n).all(|i| {
            let m = self.min_flow() + (self.max_flow() - self.min_flow()) * i as f64 / n as f64;
            self.power_slope(m) > 0.0 || m == 0.0
        })
    }
}

/// Convex piecewise-affine curve given by its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffine {
    points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

impl PiecewiseAffine {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        assert!(points.len() >= 2, "piecewise-affine curve needs two points");
        assert!(
            points.windows(2).all(|p| p[1].0 > p[0].0),
            "breakpoints must increase"
        );
        Self { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn lo(&self) -> f64 {
        self.points[0].0
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.points
            .windows(2)
            .map(|p| {
                let slope = (p[1].1 - p[0].1) / (p[1].0 - p[0].0);
                Segment {
                    lo: p[0].0,
                    hi: p[1].0,
                    slope,
                    intercept: p[0].1 - slope * p[0].0,
                }
            })
            .collect()
    }

    /// Linear interpolation, extending the end segments outside the range.
    pub fn eval(&self, x: f64) -> f64 {
        let segs = self.segments();
        let idx = segs
            .iter()
            .position(|s| x <= s.hi)
            .unwrap_or(segs.len() - 1);
        segs[idx].eval(x)
    }

    /// Value of the chord between `a` and `b` at `x`.
    pub fn chord(&self, a: f64, b: f64, x: f64) -> f64 {
        if (b - a).abs() < 1e-15 {
            return self.eval(a);
        }
        let (fa, fb) = (self.eval(a), self.eval(b));
        fa + (fb - fa) * (x - a) / (b - a)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        let segs = self.segments();
        for s in &segs {
            if y <= s.eval(s.hi) {
                return ((y - s.intercept) / s.slope).max(s.lo.min(self.lo()));
            }
        }
        let last = segs[segs.len() - 1];
        (y - last.intercept) / last.slope
    }

    /// Index of the segment containing `x` (right-closed).
    pub fn segment_index(&self, x: f64) -> usize {
        let n = self.points.len() - 1;
        (1..n)
            .find(|&i| x < self.points[i].0)
            .map_or(n - 1, |i| i - 1)
    }

    pub fn is_convex(&self) -> bool {
        self.segments()
            .windows(2)
            .all(|s| s[1].slope >= s[0].slope - 1e-12)
    }
}

/// Supply-air temperature rise from fan rotation as a function of speed:
/// flat up to `knee_speed`, then linear up to `rise_at_ref_c` at `ref_speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatGainCurve {
    pub knee_speed: f64,
    pub ref_speed: f64,
    pub rise_at_ref_c: f64,
}

impl Default for HeatGainCurve {
    fn default() -> Self {
        Self {
            knee_speed: 0.50,
            ref_speed: 0.90,
            rise_at_ref_c: 1.0,
        }
    }
}

impl HeatGainCurve {
    pub fn rise_c(&self, speed: f64) -> f64 {
        if speed <= self.knee_speed {
            0.0
        } else {
            self.rise_at_ref_c * (speed - self.knee_speed) / (self.ref_speed - self.knee_speed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rated_point_and_cube_law() {
        let fan = FanModel::default();
        assert!((fan.fan_power(fan.flow_gain_kg_s) - 2500.0).abs() < 1e-9);
        assert!((fan.fan_power(0.5 * fan.flow_gain_kg_s) - 312.5).abs() < 1e-9);
    }

    #[test]
    fn inverse_round_trips_on_grid() {
        let fan = FanModel::default();
        for i in 0..100 {
            let m = fan.min_flow() + (fan.max_flow() - fan.min_flow()) * i as f64 / 99.0;
            let back = fan.fan_power_inverse(fan.fan_power(m));
            assert!(!back.clamped);
            assert!(
                (back.flow_kg_s - m).abs() <= 1e-6 * m,
                "{m} -> {}",
                back.flow_kg_s
            );
        }
    }

    #[test]
    fn inverse_clamps_out_of_range() {
        let fan = FanModel::default();
        let hi = fan.fan_power_inverse(1e6);
        assert!(hi.clamped);
        assert_eq!(hi.flow_kg_s, fan.max_flow());
        let lo = fan.fan_power_inverse(-5.0);
        assert!(lo.clamped);
        assert_eq!(lo.flow_kg_s, fan.min_flow());
    }

    #[test]
    fn heat_gain_shape() {
        let c = HeatGainCurve::default();
        assert_eq!(c.rise_c(0.3), 0.0);
        assert_eq!(c.rise_c(0.5), 0.0);
        assert!(c.rise_c(0.7) <= 1.0 && c.rise_c(0.7) > 0.0);
        assert!((c.rise_c(0.9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pwa_overestimates_convex_curve() {
        let fan = FanModel::default();
        let pwa = fan.piecewise_affine(fan.min_flow(), fan.max_flow(), 4);
        assert!(pwa.is_convex());
        for i in 0..=50 {
            let m = fan.min_flow() + (fan.max_flow() - fan.min_flow()) * i as f64 / 50.0;
            assert!(pwa.eval(m) >= fan.fan_power(m) - 1e-9);
            assert!((pwa.inverse(pwa.eval(m)) - m).abs() < 1e-9);
        }
        for &(m, p) in pwa.points() {
            assert!((fan.fan_power(m) - p).abs() < 1e-12);
        }
    }
}
