//! Online submodular welfare maximization.
//!
//! Valuation oracles on item multisets, the staged and i.i.d. hard-instance
//! families, online allocation policies with exact offline optima, LP upper
//! bounds (budgeted allocation and the stochastic configuration-style LP), and
//! a seeded Monte Carlo harness that checks competitive-ratio claims.
//!
//! ```
//! use owm_core::{algorithms, instances, Policy};
//!
//! let block = instances::make_budget_block();
//! let trace = algorithms::run_online(&block, &Policy::greedy(), 7).unwrap();
//! assert_eq!(trace.welfare, 5.0);
//! ```

pub mod algorithms;
pub mod bounds;
mod error;
pub mod harness;
pub mod instances;
pub mod stats;
pub mod valuations;

pub use algorithms::{Policy, RunTrace, TieBreak};
pub use bounds::{LinearProgram, LpSolution, LpStatus};
pub use error::{Error, Result};
pub use instances::{Allocation, OfflineCoverageInstance, OnlineInstance, SetSystem};
pub use valuations::{
    AnyValuation, BudgetAdditiveValuation, CoverageValuation, ItemMultiset, PropertyKind, PropertyWitness,
    TabularValuation, Valuation,
};

/// Index of an item type in `0..m`.
pub type ItemId = usize;
/// Index of an agent in `0..n`.
pub type AgentId = usize;
