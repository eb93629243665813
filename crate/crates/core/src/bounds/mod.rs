//! LP relaxations and analytic bounds.
//!
//! * [`LinearProgram`] / [`solve_lp`]: a dense two-phase simplex with Bland's
//!   rule, for desk-scale programs.
//! * [`budget_lp_build`]: the standard budgeted-allocation relaxation.
//! * [`stochastic_lp_bound`]: the multiset LP bounding the expected offline
//!   optimum under i.i.d. arrivals.
//! * [`g_eval`], [`staged_upper_bound`], [`harmonic_bound`],
//!   [`no_case_value_bound`]: closed-form curves used by the hardness
//!   arguments.

mod analytic;
mod budget;
mod simplex;
mod stochastic;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use analytic::{
    adaptive_simpson, curve_csv, g_eval, harmonic_bound, no_case_value_bound, staged_integral_closed_form,
    staged_upper_bound, HarmonicBound, NoCaseBound, NoCaseBoundParams, StagedBound, STAGED_KNOT_HIGH, STAGED_KNOT_LOW,
};
pub use budget::{budget_lp_build, budget_lp_for_instance, BudgetLp};
pub use simplex::{solve_lp, solve_lp_with, SimplexOptions};
pub use stochastic::{stochastic_lp_bound, stochastic_lp_build, StochasticBound, StochasticLp, StochasticLpOptions};

use crate::{Error, Result};

/// Residual tolerance an optimal solution must meet.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// max cᵀx subject to the constraint rows, x ≥ 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<()> {
        if coeffs.len() != self.num_vars() {
            return Err(Error::Input(format!(
                "constraint has {} coefficients for {} variables",
                coeffs.len(),
                self.num_vars()
            )));
        }
        self.constraints.push(Constraint { coeffs, relation, rhs });
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("objective coefficients must be finite".into()));
        }
        for (r, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(Error::Input(format!(
                    "row {r} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(Error::Input(format!("row {r} has a non-finite entry")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint or of nonnegativity at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// LP-format text (objective row, then one row per constraint); variables
    /// are x0, x1, … and nonnegative by default.
    pub fn to_lp_text(&self) -> String {
        fn terms(coeffs: &[f64]) -> String {
            let mut s = String::new();
            for (j, &a) in coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0) {
                let sign = if a < 0.0 {
                    "-"
                } else if s.is_empty() {
                    ""
                } else {
                    "+"
                };
                if !s.is_empty() {
                    s.push(' ');
                }
                let _ = write!(s, "{sign}{}{} x{j}", if sign.is_empty() { "" } else { " " }, a.abs());
            }
            if s.is_empty() {
                s.push_str("0 x0");
            }
            s
        }
        let mut out = String::from("Maximize\n");
        let _ = writeln!(out, " obj: {}", terms(&self.objective));
        out.push_str("Subject To\n");
        for (r, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(out, " c{r}: {} {} {}", terms(&c.coeffs), c.relation.symbol(), c.rhs);
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; meaningful only when optimal.
    pub values: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// The optimal value, or an error naming the status.
    pub fn optimum(&self) -> Result<f64> {
        match self.status {
            LpStatus::Optimal => Ok(self.objective),
            s => Err(Error::Domain(format!("LP has no optimum: {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_text_export() {
        let mut lp = LinearProgram::new(vec![2.0, 0.0, -1.5]);
        lp.add_constraint(vec![1.0, 1.0, 0.0], Relation::Le, 3.0).unwrap();
        lp.add_constraint(vec![0.0, -1.0, 1.0], Relation::Eq, 1.0).unwrap();
        assert_eq!(
            lp.to_lp_text(),
            "Maximize\n obj: 2 x0 - 1.5 x2\nSubject To\n c0: 1 x0 + 1 x1 <= 3\n c1: - 1 x1 + 1 x2 = 1\nEnd\n"
        );
        assert!(lp.add_constraint(vec![1.0], Relation::Le, 1.0).is_err());
    }

    #[test]
    fn violation_measures_every_row() {
        let mut lp = LinearProgram::new(vec![1.0, 1.0]);
        lp.add_constraint(vec![1.0, 1.0], Relation::Le, 1.0).unwrap();
        lp.add_constraint(vec![1.0, 0.0], Relation::Ge, 0.5).unwrap();
        assert_eq!(lp.max_violation(&[0.5, 0.5]), 0.0);
        assert!((lp.max_violation(&[0.25, 1.0]) - 0.25).abs() < 1e-12);
        assert_eq!(lp.max_violation(&[-2.0, 0.0]), 2.5);
    }
}
