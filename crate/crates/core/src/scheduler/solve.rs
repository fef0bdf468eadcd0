use log::{debug, warn};
use nalgebra::Vector2;

use super::{
    BaselineSlot, FlowDomain, HourReserve, Linearization, ReserveSchedule, ScheduleOutcome,
    SchedulingProblem,
};
use crate::error::{Error, Result};
use crate::linmodel::{midpoints, solve_nominal, NominalPlan, NominalSpec, SlotDynamics};
use crate::lp::{Cmp, LpModel, LpOutcome};
use crate::plantsim::PiecewiseAffine;

/// Power tolerance for the envelope power constraints, kW.
const POWER_TOL: f64 = 1e-7;
/// Comfort tolerance when verifying repaired trajectories, °C.
const COMFORT_TOL: f64 = 1e-6;
const GRID_TOL: f64 = 1e-9;
const MASS_BOUND: (f64, f64) = (-100.0, 200.0);

/// Iteration cap for the sequential restriction in continuous mode.
const MAX_ROUNDS: usize = 16;

/// Solves the day-ahead reserve problem.
///
/// On a flow grid the result is globally optimal for the given
/// linearization (branch-and-bound). With continuous flows the cold
/// envelope is modeled conservatively by supporting lines of the inverse
/// fan curve, re-selected around each solution; every iterate is feasible
/// and the objective never decreases.
pub fn schedule_reserves(problem: &SchedulingProblem) -> Result<ScheduleOutcome> {
    problem.validate()?;
    match problem.config.domain {
        FlowDomain::Grid(_) => solve_grid(problem),
        FlowDomain::Continuous => solve_continuous(problem),
    }
}

fn initial_references(problem: &SchedulingProblem) -> (Vec<f64>, Vec<f64>, usize) {
    let sat = problem.config.sat_setpoint_c;
    match &problem.config.linearization {
        Linearization::Fixed { warm_c, cold_c } => (warm_c.clone(), cold_c.clone(), 0),
        Linearization::Sequential { passes } => {
            let c = &problem.calendar;
            let mid: Vec<f64> = (0..problem.slots())
                .map(|k| (0.5 * (c.lower_c[k] + c.upper_c[k])).clamp(sat + 2.0, sat + 8.0))
                .collect();
            (mid.clone(), mid, *passes)
        }
    }
}

fn solve_grid(problem: &SchedulingProblem) -> Result<ScheduleOutcome> {
    let (mut warm_ref, mut cold_ref, passes) = initial_references(problem);
    let mut last: Option<ScheduleOutcome> = None;
    let mut log = Vec::new();
    for pass in 0..=passes {
        let ctx = Context::new(problem, &warm_ref, &cold_ref);
        let solved = ctx.branch_and_bound(&mut log).map(|(sol, node, nodes)| {
            let sol = if problem.config.tie_break {
                ctx.tie_break(&sol, &node, false).unwrap_or(sol)
            } else {
                sol
            };
            ctx.outcome(&sol, nodes, pass + 1)
        });
        match solved {
            Ok(out) => {
                let x0 = problem.initial_c[0];
                warm_ref = midpoints(x0, &out.warm_envelope_c);
                cold_ref = midpoints(x0, &out.cold_envelope_c);
                last = Some(out);
            }
            Err(e) if pass == 0 => return Err(e),
            Err(e) => {
                warn!("re-linearization pass {pass} failed ({e}); keeping previous schedule");
                break;
            }
        }
    }
    last.ok_or_else(|| Error::Solver {
        message: "no schedule produced".into(),
        log,
    })
}

fn solve_continuous(problem: &SchedulingProblem) -> Result<ScheduleOutcome> {
    let (mut warm_ref, mut cold_ref, passes) = initial_references(problem);
    let x0 = problem.initial_c[0];

    // Start from the cheapest reserve-free plan; it is feasible for the
    // restricted problem with zero capacities.
    let mut ctx = Context::new(problem, &warm_ref, &cold_ref);
    let mut nominal = match ctx.nominal()? {
        Some(plan) => plan,
        None => return Err(ctx.diagnose_infeasibility()?),
    };
    for _ in 0..passes {
        let refs = midpoints(x0, &nominal.states.iter().map(|x| x[0]).collect::<Vec<_>>());
        warm_ref.clone_from(&refs);
        cold_ref.clone_from(&refs);
        ctx = Context::new(problem, &warm_ref, &cold_ref);
        match ctx.nominal()? {
            Some(plan) => nominal = plan,
            None => break,
        }
    }
    let mut segments: Vec<usize> = nominal.flows.iter().map(|&m| ctx.segment_of(m)).collect();

    let mut best: Option<(Candidate, Node)> = None;
    let mut relinearized = 0;
    let mut rounds = 0;
    for _ in 0..MAX_ROUNDS {
        rounds += 1;
        let node = ctx.line_node(&segments);
        let (lp, lay) = ctx.build_lp(&node, true);
        let cand = match lp.solve()? {
            LpOutcome::Optimal { x, .. } => ctx.extract(&lay, &x),
            LpOutcome::Infeasible => {
                debug!("restricted problem infeasible in round {rounds}");
                break;
            }
        };
        let next: Vec<usize> = (0..ctx.n)
            .map(|k| {
                let need = cand.pb[k] + cand.rd[ctx.block(k)];
                ctx.segment_of(ctx.pwa.inverse(need))
            })
            .collect();
        let (_, _, xw, xc) = ctx.envelopes(&cand.m_warm, &cand.m_cold);
        let new_warm = midpoints(x0, &xw.iter().map(|x| x[0]).collect::<Vec<_>>());
        let new_cold = midpoints(x0, &xc.iter().map(|x| x[0]).collect::<Vec<_>>());
        let drift = new_warm
            .iter()
            .zip(&warm_ref)
            .chain(new_cold.iter().zip(&cold_ref))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let improved = best
            .as_ref()
            .is_none_or(|(b, _)| cand.objective > b.objective + 1e-12);
        let stable = next == segments;
        best = Some((cand, node));
        let relinearize = relinearized < passes && drift > 0.02;
        if stable && !relinearize {
            break;
        }
        if !improved && !relinearize && rounds > 1 {
            break;
        }
        segments = next;
        if relinearize {
            relinearized += 1;
            warm_ref = new_warm;
            cold_ref = new_cold;
            ctx = Context::new(problem, &warm_ref, &cold_ref);
            // Keep the last admissible candidate under the new linearization
            // only if it is still the best available.
            best = None;
        }
    }
    let (cand, node) = match best {
        Some(b) => b,
        None => {
            // The last re-linearization made the restriction infeasible:
            // fall back to a reserve-free schedule under the current model.
            let nominal = ctx.nominal()?.ok_or_else(|| Error::Solver {
                message: "re-linearized problem infeasible".into(),
                log: vec![format!("{rounds} rounds")],
            })?;
            let segments: Vec<usize> = nominal.flows.iter().map(|&m| ctx.segment_of(m)).collect();
            let node = ctx.line_node(&segments);
            let (lp, lay) = ctx.build_lp(&node, true);
            match lp.solve()? {
                LpOutcome::Optimal { x, .. } => (ctx.extract(&lay, &x), node),
                LpOutcome::Infeasible => return Err(ctx.diagnose_infeasibility()?),
            }
        }
    };
    let cand = if problem.config.tie_break {
        ctx.tie_break(&cand, &node, true).unwrap_or(cand)
    } else {
        cand
    };
    Ok(ctx.outcome(&cand, rounds, relinearized + 1))
}

/// Candidate solution, powers in kW.
#[derive(Debug, Clone)]
struct Candidate {
    pb: Vec<f64>,
    ru: Vec<f64>,
    rd: Vec<f64>,
    m_warm: Vec<f64>,
    m_cold: Vec<f64>,
    objective: f64,
}

/// Index intervals into the branching points for each slot's flows.
#[derive(Debug, Clone)]
struct Node {
    warm: Vec<(usize, usize)>,
    cold: Vec<(usize, usize)>,
}

struct Layout {
    pb: Vec<usize>,
    m_warm: Vec<usize>,
    m_cold: Vec<usize>,
    ru: Vec<usize>,
    rd: Vec<usize>,
}

struct Context<'a> {
    p: &'a SchedulingProblem,
    n: usize,
    blocks: usize,
    dt_h: f64,
    /// Fan curve interpolation in kW.
    pwa: PiecewiseAffine,
    /// Branching points: curve breakpoints, or the admissible flow grid.
    pts: Vec<f64>,
    grid: bool,
    warm: SlotDynamics,
    cold: SlotDynamics,
    x0: Vector2<f64>,
}

impl<'a> Context<'a> {
    fn new(p: &'a SchedulingProblem, warm_ref: &[f64], cold_ref: &[f64]) -> Self {
        let cfg = &p.config;
        let pwa_w = p
            .fan
            .piecewise_affine(cfg.flow_lo_kg_s, cfg.flow_hi_kg_s, cfg.pwa_segments);
        let pwa = PiecewiseAffine::new(
            pwa_w
                .points()
                .iter()
                .map(|&(m, w)| (m, w / 1000.0))
                .collect(),
        );
        let (pts, grid) = match &cfg.domain {
            FlowDomain::Continuous => (pwa.breakpoints().collect(), false),
            FlowDomain::Grid(g) => (g.clone(), true),
        };
        let gains = &p.internal_gain_w;
        let sat = cfg.sat_setpoint_c;
        Self {
            p,
            n: p.slots(),
            blocks: p.slots() / cfg.slots_per_block,
            dt_h: cfg.slot_s / 3600.0,
            pwa,
            pts,
            grid,
            warm: SlotDynamics::new(&p.thermal, cfg.slot_s, &p.forecast, gains, warm_ref, sat),
            cold: SlotDynamics::new(&p.thermal, cfg.slot_s, &p.forecast, gains, cold_ref, sat),
            x0: Vector2::new(p.initial_c[0], p.initial_c[1]),
        }
    }

    /// Segment containing flow `m`; the upper one at a shared breakpoint.
    fn segment_of(&self, m: f64) -> usize {
        let last = self.pts.len() - 1;
        (0..last)
            .rev()
            .find(|&s| self.pts[s] <= m + GRID_TOL)
            .unwrap_or(0)
    }

    fn line_node(&self, segments: &[usize]) -> Node {
        let last = self.pts.len() - 1;
        Node {
            warm: vec![(0, last); self.n],
            cold: segments.iter().map(|&s| (s, s + 1)).collect(),
        }
    }

    fn nominal(&self) -> Result<Option<NominalPlan>> {
        let cfg = &self.p.config;
        let lo = vec![cfg.flow_lo_kg_s; self.n];
        let hi = vec![cfg.flow_hi_kg_s; self.n];
        let cost: Vec<f64> = self
            .p
            .tariff
            .energy_eur_kwh
            .iter()
            .map(|c| c * self.dt_h)
            .collect();
        solve_nominal(&NominalSpec {
            dynamics: &self.warm,
            x0: self.x0,
            flow_lo: &lo,
            flow_hi: &hi,
            pwa_kw: &self.pwa,
            cost: &cost,
            lower_c: &self.p.calendar.lower_c,
            upper_c: &self.p.calendar.upper_c,
            slack_penalty: None,
        })
    }

    fn block(&self, k: usize) -> usize {
        k / self.p.config.slots_per_block
    }

    fn root(&self) -> Node {
        let last = self.pts.len() - 1;
        Node {
            warm: vec![(0, last); self.n],
            cold: vec![(0, last); self.n],
        }
    }

    fn objective_coefficients(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let t = &self.p.tariff;
        let mut up = vec![0.0; self.blocks];
        let mut down = vec![0.0; self.blocks];
        let mut base = vec![0.0; self.n];
        for k in 0..self.n {
            let h = self.block(k);
            up[h] += t.capacity_eur_kwh[k] * self.dt_h;
            down[h] += t.capacity_eur_kwh[k] * self.dt_h;
            base[k] = -t.energy_eur_kwh[k] * self.dt_h;
        }
        (up, down, base)
    }

    /// Envelope flows entering the dynamics (mixed under the zero-mean option).
    fn envelope_mix(&self) -> ((f64, f64), (f64, f64)) {
        if self.p.config.zero_mean {
            ((0.75, 0.25), (0.25, 0.75))
        } else {
            ((1.0, 0.0), (0.0, 1.0))
        }
    }

    fn build_lp(&self, node: &Node, cold_lines: bool) -> (LpModel, Layout) {
        let p = self.p;
        let mut lp = LpModel::new(true);
        let (c_up, c_down, c_base) = self.objective_coefficients();
        let p_lo = self.pwa.eval(p.config.flow_lo_kg_s);
        let p_hi = self.pwa.eval(p.config.flow_hi_kg_s);

        let ru: Vec<usize> = (0..self.blocks)
            .map(|h| {
                let c = if p.symmetric {
                    c_up[h] + c_down[h]
                } else {
                    c_up[h]
                };
                lp.add_var(c, 0.0, p_hi - p_lo)
            })
            .collect();
        let rd: Vec<usize> = if p.symmetric {
            ru.clone()
        } else {
            (0..self.blocks)
                .map(|h| lp.add_var(c_down[h], 0.0, p_hi - p_lo))
                .collect()
        };
        let pb: Vec<usize> = (0..self.n)
            .map(|k| lp.add_var(c_base[k], p_lo, p_hi))
            .collect();
        let m_warm: Vec<usize> = node
            .warm
            .iter()
            .map(|&(a, b)| lp.add_var(0.0, self.pts[a], self.pts[b]))
            .collect();
        let last = self.pts.len() - 1;
        let m_cold: Vec<usize> = node
            .cold
            .iter()
            .map(|&(a, b)| {
                let (a, b) = if cold_lines { (0, last) } else { (a, b) };
                lp.add_var(0.0, self.pts[a], self.pts[b])
            })
            .collect();

        let segments = self.pwa.segments();
        for k in 0..self.n {
            let h = self.block(k);
            // Warm envelope: P(m-) <= P_b - R_u on every segment (convex).
            for s in &segments {
                lp.add_con(
                    vec![(m_warm[k], s.slope), (pb[k], -1.0), (ru[h], 1.0)],
                    Cmp::Le,
                    -s.intercept,
                );
            }
            // Cold envelope: chord of P over the node interval >= P_b + R_d.
            // With `cold_lines` the interval is one segment whose line is
            // extended over the whole band, a supporting line of the convex
            // curve and hence a conservative restriction.
            let (a, b) = (self.pts[node.cold[k].0], self.pts[node.cold[k].1]);
            if b - a > 0.0 {
                let slope = (self.pwa.eval(b) - self.pwa.eval(a)) / (b - a);
                let icpt = self.pwa.eval(a) - slope * a;
                lp.add_con(
                    vec![(m_cold[k], slope), (pb[k], -1.0), (rd[h], -1.0)],
                    Cmp::Ge,
                    -icpt,
                );
            } else {
                lp.add_con(vec![(pb[k], 1.0), (rd[h], 1.0)], Cmp::Le, self.pwa.eval(a));
            }
            // Deliverability within the scheduler's flow band.
            lp.add_con(vec![(pb[k], 1.0), (ru[h], -1.0)], Cmp::Ge, p_lo);
            lp.add_con(vec![(pb[k], 1.0), (rd[h], 1.0)], Cmp::Le, p_hi);
        }

        let (mix_w, mix_c) = self.envelope_mix();
        for (dynamics, mix) in [(&self.warm, mix_w), (&self.cold, mix_c)] {
            let states: Vec<[usize; 2]> = (0..self.n)
                .map(|k| {
                    let cal = &p.calendar;
                    [
                        lp.add_var(0.0, cal.lower_c[k], cal.upper_c[k]),
                        lp.add_var(0.0, MASS_BOUND.0, MASS_BOUND.1),
                    ]
                })
                .collect();
            for k in 0..self.n {
                for i in 0..2 {
                    let mut terms = vec![(states[k][i], 1.0)];
                    let mut rhs = dynamics.drift[k][i];
                    for j in 0..2 {
                        let a = dynamics.a[(i, j)];
                        if k == 0 {
                            rhs += a * self.x0[j];
                        } else {
                            terms.push((states[k - 1][j], -a));
                        }
                    }
                    let f = dynamics.flow[k][i];
                    if f != 0.0 {
                        if mix.0 != 0.0 {
                            terms.push((m_warm[k], -f * mix.0));
                        }
                        if mix.1 != 0.0 {
                            terms.push((m_cold[k], -f * mix.1));
                        }
                    }
                    lp.add_con(terms, Cmp::Eq, rhs);
                }
            }
        }
        (
            lp,
            Layout {
                pb,
                m_warm,
                m_cold,
                ru,
                rd,
            },
        )
    }

    fn extract(&self, lay: &Layout, x: &[f64]) -> Candidate {
        let ru: Vec<f64> = lay.ru.iter().map(|&i| x[i].max(0.0)).collect();
        let rd: Vec<f64> = lay.rd.iter().map(|&i| x[i].max(0.0)).collect();
        let pb: Vec<f64> = lay.pb.iter().map(|&i| x[i]).collect();
        let mut c = Candidate {
            pb,
            ru,
            rd,
            m_warm: lay.m_warm.iter().map(|&i| x[i]).collect(),
            m_cold: lay.m_cold.iter().map(|&i| x[i]).collect(),
            objective: 0.0,
        };
        c.objective = self.objective(&c);
        c
    }

    fn objective(&self, c: &Candidate) -> f64 {
        let (c_up, c_down, c_base) = self.objective_coefficients();
        let rev: f64 = (0..self.blocks)
            .map(|h| c_up[h] * c.ru[h] + c_down[h] * c.rd[h])
            .sum();
        let cost: f64 = (0..self.n).map(|k| c_base[k] * c.pb[k]).sum();
        rev + cost
    }

    fn nearest_grid_below(&self, v: f64, lo: usize, hi: usize) -> usize {
        (lo..=hi)
            .rev()
            .find(|&j| self.pts[j] <= v + GRID_TOL)
            .unwrap_or(lo)
    }

    fn nearest_grid_above(&self, v: f64, lo: usize, hi: usize) -> Option<usize> {
        (lo..=hi).find(|&j| self.pts[j] >= v - GRID_TOL)
    }

    fn envelopes(
        &self,
        m_warm: &[f64],
        m_cold: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
        let (mw, mc) = self.envelope_mix();
        let fw: Vec<f64> = (0..self.n)
            .map(|k| mw.0 * m_warm[k] + mw.1 * m_cold[k])
            .collect();
        let fc: Vec<f64> = (0..self.n)
            .map(|k| mc.0 * m_warm[k] + mc.1 * m_cold[k])
            .collect();
        let xw = self.warm.simulate(self.x0, &fw);
        let xc = self.cold.simulate(self.x0, &fc);
        (fw, fc, xw, xc)
    }

    fn comfortable(&self, xs: &[Vector2<f64>]) -> bool {
        let cal = &self.p.calendar;
        xs.iter().enumerate().all(|(k, x)| {
            x[0] >= cal.lower_c[k] - COMFORT_TOL && x[0] <= cal.upper_c[k] + COMFORT_TOL
        })
    }

    /// Rounds the relaxed flows to admissible ones without touching powers
    /// or capacities; succeeds when both envelopes stay comfortable.
    fn repair(&self, node: &Node, c: &Candidate) -> Option<(Candidate, Node)> {
        let mut fixed = node.clone();
        let mut out = c.clone();
        for k in 0..self.n {
            let need = c.pb[k] + c.rd[self.block(k)];
            let target = self.pwa.inverse(need).max(c.m_cold[k]);
            let (a, b) = node.cold[k];
            if self.grid {
                let (wa, wb) = node.warm[k];
                let j = self.nearest_grid_below(c.m_warm[k], wa, wb);
                out.m_warm[k] = self.pts[j];
                fixed.warm[k] = (j, j);
                let j = self.nearest_grid_above(target, a, b)?;
                out.m_cold[k] = self.pts[j];
                fixed.cold[k] = (j, j);
            } else {
                if target > self.pts[b] + GRID_TOL {
                    return None;
                }
                let m = target.min(self.pts[b]);
                out.m_cold[k] = m;
                let seg = (a..b)
                    .find(|&s| m <= self.pts[s + 1] + GRID_TOL)
                    .unwrap_or(b - 1);
                fixed.cold[k] = (seg, seg + 1);
            }
        }
        let (_, _, xw, xc) = self.envelopes(&out.m_warm, &out.m_cold);
        (self.comfortable(&xw) && self.comfortable(&xc)).then_some((out, fixed))
    }

    /// Picks a slot/flow to branch on and returns the two child nodes.
    fn branch(&self, node: &Node, c: &Candidate) -> Option<(Node, Node)> {
        let mut best: Option<(f64, bool, usize)> = None;
        for k in 0..self.n {
            let need = c.pb[k] + c.rd[self.block(k)];
            let mut score = (need - self.pwa.eval(c.m_cold[k])).max(0.0);
            if self.grid {
                score = score.max(self.off_grid(c.m_cold[k]));
            }
            let (a, b) = node.cold[k];
            if score > POWER_TOL && b > a && best.is_none_or(|(s, _, _)| score > s) {
                best = Some((score, true, k));
            }
            if self.grid {
                let (a, b) = node.warm[k];
                let off = self.off_grid(c.m_warm[k]);
                if off > GRID_TOL && b > a && best.is_none_or(|(s, _, _)| off > s) {
                    best = Some((off, false, k));
                }
            }
        }
        let (_, cold, k) = best?;
        let (iv, v) = if cold {
            (node.cold[k], c.m_cold[k])
        } else {
            (node.warm[k], c.m_warm[k])
        };
        let (left, right) = self.split(iv, v);
        let mut l = node.clone();
        let mut r = node.clone();
        if cold {
            l.cold[k] = left;
            r.cold[k] = right;
        } else {
            l.warm[k] = left;
            r.warm[k] = right;
        }
        Some((l, r))
    }

    fn off_grid(&self, v: f64) -> f64 {
        self.pts
            .iter()
            .map(|g| (g - v).abs())
            .fold(f64::INFINITY, f64::min)
    }

    fn split(&self, (a, b): (usize, usize), v: f64) -> ((usize, usize), (usize, usize)) {
        debug_assert!(b > a);
        // Exactly on an interior point: split there (both children share it).
        if let Some(j) = (a + 1..b).find(|&j| (self.pts[j] - v).abs() <= GRID_TOL) {
            return ((a, j), (j, b));
        }
        let j = (a..b).rev().find(|&j| self.pts[j] < v).unwrap_or(a);
        if self.grid {
            ((a, j), (j + 1, b))
        } else if j == a {
            ((a, a + 1), (a + 1, b))
        } else {
            // Continuous curve: the chord is exact once an interval spans one segment.
            let mid = if v - self.pts[j] < self.pts[j + 1] - v {
                j
            } else {
                (j + 1).min(b - 1)
            };
            let mid = mid.clamp(a + 1, b - 1);
            ((a, mid), (mid, b))
        }
    }

    fn branch_and_bound(&self, log: &mut Vec<String>) -> Result<(Candidate, Node, usize)> {
        let max_nodes = self.p.config.max_nodes;
        let mut open: Vec<(f64, Node)> = vec![(f64::INFINITY, self.root())];
        let mut best: Option<(Candidate, Node)> = None;
        let mut nodes = 0usize;
        let mut root_infeasible = false;
        let tol = |v: f64| 1e-10 * v.abs().max(1.0);
        while !open.is_empty() {
            let idx = open
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
                .map(|(i, _)| i)
                .expect("non-empty");
            let (bound, node) = open.swap_remove(idx);
            if let Some((inc, _)) = &best {
                if bound <= inc.objective + tol(inc.objective) {
                    continue;
                }
            }
            if nodes >= max_nodes {
                let msg = format!(
                    "node limit {max_nodes} reached with {} open nodes",
                    open.len() + 1
                );
                warn!("{msg}");
                log.push(msg);
                break;
            }
            nodes += 1;
            let (lp, lay) = self.build_lp(&node, false);
            let x = match lp.solve()? {
                LpOutcome::Infeasible => {
                    if nodes == 1 {
                        root_infeasible = true;
                    }
                    continue;
                }
                LpOutcome::Optimal { x, .. } => x,
            };
            let cand = self.extract(&lay, &x);
            if let Some((inc, _)) = &best {
                if cand.objective <= inc.objective + tol(inc.objective) {
                    continue;
                }
            }
            if let Some((fixed, fixed_node)) = self.repair(&node, &cand) {
                debug!("node {nodes}: incumbent {:.9}", fixed.objective);
                best = Some((fixed, fixed_node));
                continue;
            }
            match self.branch(&node, &cand) {
                Some((l, r)) => {
                    open.push((cand.objective, l));
                    open.push((cand.objective, r));
                }
                None => log.push(format!(
                    "node {nodes}: relaxation not repairable and nothing to branch on"
                )),
            }
        }
        log.push(format!("branch-and-bound explored {nodes} nodes"));
        match best {
            Some((c, n)) => Ok((c, n, nodes)),
            None if root_infeasible => Err(self.diagnose_infeasibility()?),
            None => Err(Error::Infeasible {
                slot: 0,
                detail: "no admissible flow plan satisfies comfort on both envelopes".into(),
            }),
        }
    }

    /// Among schedules within a hair of the optimum, prefers the smoothest
    /// baseline (minimum sum of squared baseline powers, tangent-line model).
    fn tie_break(&self, c: &Candidate, node: &Node, cold_lines: bool) -> Option<Candidate> {
        let (mut lp, lay) = self.build_lp(node, cold_lines);
        let target = c.objective - 1e-9 * c.objective.abs().max(1e-3);
        let terms: Vec<(usize, f64)> = lp
            .obj
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        lp.add_con(terms, Cmp::Ge, target);
        let mut obj = vec![0.0; lp.num_vars()];
        let p_hi = self.pwa.eval(self.p.config.flow_hi_kg_s);
        let cuts: Vec<f64> = (0..=12).map(|i| p_hi * i as f64 / 12.0).collect();
        for k in 0..self.n {
            let t = lp.add_var(0.0, 0.0, f64::INFINITY);
            obj.push(1.0);
            for &q in &cuts {
                lp.add_con(vec![(t, 1.0), (lay.pb[k], -2.0 * q)], Cmp::Ge, -q * q);
            }
        }
        lp.set_objective(false, obj);
        match lp.solve() {
            Ok(LpOutcome::Optimal { x, .. }) => {
                let cand = self.extract(&lay, &x);
                let cand = if cold_lines {
                    cand
                } else {
                    self.repair(node, &cand)?.0
                };
                (cand.objective >= c.objective - 1e-8 * c.objective.abs().max(1e-3)).then_some(cand)
            }
            _ => None,
        }
    }

    fn diagnose_infeasibility(&self) -> Result<Error> {
        let p = self.p;
        let mut lp = LpModel::new(false);
        let cal = &p.calendar;
        let flows: Vec<usize> = (0..self.n)
            .map(|_| lp.add_var(0.0, p.config.flow_lo_kg_s, p.config.flow_hi_kg_s))
            .collect();
        let slack: Vec<usize> = (0..self.n)
            .map(|k| lp.add_var((self.n - k) as f64, 0.0, f64::INFINITY))
            .collect();
        let states: Vec<[usize; 2]> = (0..self.n)
            .map(|_| {
                [
                    lp.add_var(0.0, MASS_BOUND.0, MASS_BOUND.1),
                    lp.add_var(0.0, MASS_BOUND.0, MASS_BOUND.1),
                ]
            })
            .collect();
        let dynamics = &self.warm;
        for k in 0..self.n {
            for i in 0..2 {
                let mut terms = vec![(states[k][i], 1.0), (flows[k], -dynamics.flow[k][i])];
                let mut rhs = dynamics.drift[k][i];
                for j in 0..2 {
                    let a = dynamics.a[(i, j)];
                    if k == 0 {
                        rhs += a * self.x0[j];
                    } else {
                        terms.push((states[k - 1][j], -a));
                    }
                }
                lp.add_con(terms, Cmp::Eq, rhs);
            }
            lp.add_con(
                vec![(states[k][0], 1.0), (slack[k], 1.0)],
                Cmp::Ge,
                cal.lower_c[k],
            );
            lp.add_con(
                vec![(states[k][0], 1.0), (slack[k], -1.0)],
                Cmp::Le,
                cal.upper_c[k],
            );
        }
        let x = match lp.solve()? {
            LpOutcome::Optimal { x, .. } => x,
            LpOutcome::Infeasible => {
                return Ok(Error::Infeasible {
                    slot: 0,
                    detail: "relaxed comfort problem is itself infeasible".into(),
                })
            }
        };
        let first = (0..self.n).find(|&k| x[slack[k]] > 1e-6);
        Ok(match first {
            Some(k) => Error::Infeasible {
                slot: k,
                detail: format!(
                    "room temperature misses [{}, {}] by {:.3} K",
                    cal.lower_c[k], cal.upper_c[k], x[slack[k]]
                ),
            },
            None => Error::Infeasible {
                slot: 0,
                detail: "comfort reachable only without reserves on an admissible flow plan".into(),
            },
        })
    }

    fn outcome(&self, c: &Candidate, nodes: usize, passes: usize) -> ScheduleOutcome {
        let (_, _, xw, xc) = self.envelopes(&c.m_warm, &c.m_cold);
        let (c_up, c_down, c_base) = self.objective_coefficients();
        let revenue: f64 = (0..self.blocks)
            .map(|h| c_up[h] * c.ru[h] + c_down[h] * c.rd[h])
            .sum();
        let cost: f64 = -(0..self.n).map(|k| c_base[k] * c.pb[k]).sum::<f64>();
        // Capacities within solver tolerance of zero are reported as zero.
        let snap = |kw: f64| if kw < 1e-9 { 0.0 } else { kw * 1000.0 };
        let hours = (0..self.blocks)
            .map(|h| HourReserve {
                r_up_w: snap(c.ru[h]),
                r_down_w: snap(c.rd[h]),
            })
            .collect();
        let slots = (0..self.n)
            .map(|k| {
                let p_b_w = c.pb[k] * 1000.0;
                BaselineSlot {
                    p_b_w,
                    m_air_kg_s: self.p.fan.fan_power_inverse(p_b_w).flow_kg_s,
                }
            })
            .collect();
        ScheduleOutcome {
            schedule: ReserveSchedule {
                slots_per_block: self.p.config.slots_per_block,
                hours,
                slots,
            },
            objective_eur: revenue - cost,
            revenue_eur: revenue,
            energy_cost_eur: cost,
            warm_envelope_c: xw.iter().map(|x| x[0]).collect(),
            cold_envelope_c: xc.iter().map(|x| x[0]).collect(),
            warm_flow_kg_s: c.m_warm.clone(),
            cold_flow_kg_s: c.m_cold.clone(),
            nodes,
            passes,
        }
    }
}
