//! Owned linear-program description solved with `microlp`. Keeping the model
//! as plain data lets branch-and-bound nodes clone and tighten it.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LpModel {
    maximize: bool,
    pub obj: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cons: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64> },
    Infeasible,
}

impl LpModel {
    pub fn new(maximize: bool) -> Self {
        Self {
            maximize,
            obj: Vec::new(),
            lo: Vec::new(),
            hi: Vec::new(),
            cons: Vec::new(),
        }
    }

    pub fn add_var(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.obj.push(obj);
        self.lo.push(lo);
        self.hi.push(hi);
        self.obj.len() - 1
    }

    pub fn add_con(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.cons.push(Constraint { terms, cmp, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.obj.len()
    }

    pub fn set_objective(&mut self, maximize: bool, obj: Vec<f64>) {
        assert_eq!(obj.len(), self.obj.len());
        self.maximize = maximize;
        self.obj = obj;
    }

    #[cfg(test)]
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn size(&self) -> String {
        format!(
            "{} variables, {} constraints",
            self.obj.len(),
            self.cons.len()
        )
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let dir = if self.maximize {
            OptimizationDirection::Maximize
        } else {
            OptimizationDirection::Minimize
        };
        let mut p = Problem::new(dir);
        let vars: Vec<_> = (0..self.obj.len())
            .map(|i| p.add_var(self.obj[i], (self.lo[i], self.hi[i])))
            .collect();
        for c in &self.cons {
            let terms: Vec<_> = c.terms.iter().map(|&(i, a)| (vars[i], a)).collect();
            let op = match c.cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            p.add_constraint(terms.as_slice(), op, c.rhs);
        }
        match p.solve() {
            Ok(SolveOutcome::Solution(sol)) => {
                let x: Vec<f64> = vars.iter().map(|&v| sol.var_value(v)).collect();
                Ok(LpOutcome::Optimal { x })
            }
            Ok(SolveOutcome::Interrupted(_)) => Err(Error::Solver {
                message: "LP solve interrupted".into(),
                log: vec![self.size()],
            }),
            Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(e) => Err(Error::Solver {
                message: e.to_string(),
                log: vec![self.size()],
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
        let mut m = LpModel::new(true);
        let x = m.add_var(1.0, 0.0, f64::INFINITY);
        let y = m.add_var(1.0, 0.0, f64::INFINITY);
        m.add_con(vec![(x, 1.0), (y, 2.0)], Cmp::Le, 4.0);
        m.add_con(vec![(x, 3.0), (y, 1.0)], Cmp::Le, 6.0);
        match m.solve().unwrap() {
            LpOutcome::Optimal { x: v } => {
                assert!((m.objective_value(&v) - 2.8).abs() < 1e-9);
                assert!((v[0] - 1.6).abs() < 1e-9 && (v[1] - 1.2).abs() < 1e-9);
            }
            LpOutcome::Infeasible => panic!("feasible problem reported infeasible"),
        }
    }

    #[test]
    fn detects_infeasible() {
        let mut m = LpModel::new(false);
        let x = m.add_var(1.0, 0.0, 1.0);
        m.add_con(vec![(x, 1.0)], Cmp::Ge, 2.0);
        assert!(matches!(m.solve().unwrap(), LpOutcome::Infeasible));
    }
}
