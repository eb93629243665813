use serde::{Deserialize, Serialize};

use super::{LinearProgram, Relation};
use crate::instances::{ArrivalEvent, OnlineInstance, Schedule};
use crate::valuations::AnyValuation;
use crate::{AgentId, Error, Result};

/// The budgeted-allocation relaxation
///
/// max Σ b_{ai} x_{ai}  s.t.  Σᵢ b_{ai} x_{ai} ≤ B_a (each a),  Σₐ x_{ai} ≤ 1 (each i),  x ≥ 0,
///
/// with one variable per available (agent, item) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLp {
    pub lp: LinearProgram,
    /// (agent, item) of each LP column.
    pub variables: Vec<(AgentId, usize)>,
    pub num_agents: usize,
    pub num_items: usize,
}

/// `bids[a][i]` is agent a's bid for item i. Bids above the budget are
/// lowered to it. `available[a][i] = false` drops the pair.
pub fn budget_lp_build(bids: &[Vec<f64>], budgets: &[f64], available: Option<&[Vec<bool>]>) -> Result<BudgetLp> {
    let num_agents = bids.len();
    if budgets.len() != num_agents {
        return Err(Error::Input(format!(
            "{num_agents} bid rows but {} budgets",
            budgets.len()
        )));
    }
    let num_items = bids.first().map_or(0, Vec::len);
    if bids.iter().any(|row| row.len() != num_items) {
        return Err(Error::Input("bid matrix rows differ in length".into()));
    }
    for (a, row) in bids.iter().enumerate() {
        if let Some((i, b)) = row.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b >= 0.0)) {
            return Err(Error::Input(format!(
                "bid of agent {a} for item {i} is {b}; bids must be ≥ 0"
            )));
        }
        if !(budgets[a].is_finite() && budgets[a] >= 0.0) {
            return Err(Error::Input(format!("budget of agent {a} must be ≥ 0")));
        }
    }
    let is_available = |a: usize, i: usize| available.is_none_or(|m| m[a][i]);
    let variables: Vec<(AgentId, usize)> = (0..num_agents)
        .flat_map(|a| (0..num_items).map(move |i| (a, i)))
        .filter(|&(a, i)| is_available(a, i))
        .collect();
    let bid = |a: usize, i: usize| bids[a][i].min(budgets[a]);

    let mut lp = LinearProgram::new(variables.iter().map(|&(a, i)| bid(a, i)).collect());
    for (a, &budget) in budgets.iter().enumerate() {
        let row = variables
            .iter()
            .map(|&(va, i)| if va == a { bid(a, i) } else { 0.0 })
            .collect();
        lp.add_constraint(row, Relation::Le, budget)?;
    }
    for i in 0..num_items {
        let row = variables
            .iter()
            .map(|&(_, vi)| if vi == i { 1.0 } else { 0.0 })
            .collect();
        lp.add_constraint(row, Relation::Le, 1.0)?;
    }
    Ok(BudgetLp {
        lp,
        variables,
        num_agents,
        num_items,
    })
}

/// The relaxation of a realized budget-additive online instance: every
/// arrival is its own item, available to the agents active in its stage.
pub fn budget_lp_for_instance(
    inst: &OnlineInstance,
    arrivals: &[ArrivalEvent],
    schedule: &Schedule,
) -> Result<BudgetLp> {
    let mut bids = Vec::with_capacity(inst.num_agents());
    let mut budgets = Vec::with_capacity(inst.num_agents());
    for (a, v) in inst.agents.iter().enumerate() {
        let AnyValuation::BudgetAdditive(v) = v else {
            return Err(Error::Input(format!("agent {a} is not budget-additive")));
        };
        bids.push(arrivals.iter().map(|ev| v.bids()[ev.item]).collect());
        budgets.push(v.budget());
    }
    let available: Vec<Vec<bool>> = (0..inst.num_agents())
        .map(|a| arrivals.iter().map(|ev| schedule.is_active(a, ev.stage)).collect())
        .collect();
    budget_lp_build(&bids, &budgets, Some(&available))
}
