use serde::{Deserialize, Serialize};

use super::{solve_lp, LinearProgram, LpSolution, Relation};
use crate::valuations::{count_multisets_up_to, multisets_up_to, ItemMultiset, Valuation};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct StochasticLpOptions {
    /// Largest multiset size enumerated; `None` means the draw count, which is
    /// the only setting under which the LP bounds the expected optimum.
    pub size_cap: Option<usize>,
    /// Largest number of LP columns (agents × multisets).
    pub max_variables: u128,
}

impl Default for StochasticLpOptions {
    fn default() -> Self {
        Self {
            size_cap: None,
            max_variables: 2000,
        }
    }
}

/// max Σ x_{i,S} wᵢ(S)  s.t.  Σ_{i,S} x_{i,S} c_j(S) ≤ p_j·m (each j),
/// Σ_S x_{i,S} = 1 (each i),  x ≥ 0,
/// with S over multisets of at most `size_cap` items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticLp {
    pub lp: LinearProgram,
    pub multisets: Vec<ItemMultiset>,
    pub num_agents: usize,
    pub draws: usize,
    pub probabilities: Vec<f64>,
    pub size_cap: usize,
}

impl StochasticLp {
    /// True when every multiset of at most `draws` items is a column.
    pub fn is_full(&self) -> bool {
        self.size_cap >= self.draws
    }

    pub fn column(&self, agent: usize, multiset: usize) -> usize {
        agent * self.multisets.len() + multiset
    }

    /// y_{ij} = Σ_S x_{i,S} c_j(S), indexed `[agent][item]`.
    pub fn item_usage(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let m = self.probabilities.len();
        (0..self.num_agents)
            .map(|i| {
                let mut y = vec![0.0; m];
                for (s, ms) in self.multisets.iter().enumerate() {
                    let xv = x[self.column(i, s)];
                    if xv != 0.0 {
                        for (j, c) in ms.iter() {
                            y[j] += xv * c as f64;
                        }
                    }
                }
                y
            })
            .collect()
    }
}

pub fn stochastic_lp_build<V: Valuation>(
    valuations: &[V],
    draws: usize,
    probabilities: &[f64],
    opts: StochasticLpOptions,
) -> Result<StochasticLp> {
    let m = probabilities.len();
    if valuations.is_empty() {
        return Err(Error::Input("need at least one agent".into()));
    }
    if valuations.iter().any(|v| v.num_items() != m) {
        return Err(Error::Input(format!(
            "valuations must be defined on the {m} item types"
        )));
    }
    if probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Input("probabilities must be finite and ≥ 0".into()));
    }
    let size_cap = opts.size_cap.unwrap_or(draws).min(draws);
    let per_agent = count_multisets_up_to(m, size_cap as u32);
    let columns = per_agent.saturating_mul(valuations.len() as u128);
    if columns > opts.max_variables {
        return Err(Error::Resource {
            what: "stochastic LP columns",
            needed: columns,
            limit: opts.max_variables,
            hint: "; lower the size cap (the result is then no longer an upper bound)",
        });
    }
    let multisets = multisets_up_to(m, size_cap as u32);
    let n = valuations.len();
    let mut objective = Vec::with_capacity(n * multisets.len());
    for v in valuations {
        for s in &multisets {
            objective.push(v.value(s)?);
        }
    }
    let mut lp = LinearProgram::new(objective);
    let width = n * multisets.len();
    for (j, &p) in probabilities.iter().enumerate() {
        let mut row = vec![0.0; width];
        for i in 0..n {
            for (s, ms) in multisets.iter().enumerate() {
                row[i * multisets.len() + s] = ms.count(j) as f64;
            }
        }
        lp.add_constraint(row, Relation::Le, p * draws as f64)?;
    }
    for i in 0..n {
        let mut row = vec![0.0; width];
        row[i * multisets.len()..(i + 1) * multisets.len()].fill(1.0);
        lp.add_constraint(row, Relation::Eq, 1.0)?;
    }
    Ok(StochasticLp {
        lp,
        multisets,
        num_agents: n,
        draws,
        probabilities: probabilities.to_vec(),
        size_cap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticBound {
    pub value: f64,
    /// Whether `value` is a valid upper bound on E[OPT] (full enumeration).
    pub is_upper_bound: bool,
    pub solution: LpSolution,
    pub program: StochasticLp,
}

impl StochasticBound {
    /// y_{ij} of the optimal solution.
    pub fn item_usage(&self) -> Vec<Vec<f64>> {
        self.program.item_usage(&self.solution.values)
    }
}

pub fn stochastic_lp_bound<V: Valuation>(
    valuations: &[V],
    draws: usize,
    probabilities: &[f64],
    opts: StochasticLpOptions,
) -> Result<StochasticBound> {
    let program = stochastic_lp_build(valuations, draws, probabilities, opts)?;
    let solution = solve_lp(&program.lp)?;
    let value = solution.optimum()?;
    Ok(StochasticBound {
        value,
        is_upper_bound: program.is_full(),
        solution,
        program,
    })
}
