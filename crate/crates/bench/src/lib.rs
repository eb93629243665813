//! Fixtures shared by the criterion benches.

use owm_core::algorithms::realize;
use owm_core::bounds::budget_lp_for_instance;
use owm_core::instances::make_budget_staged;
use owm_core::{LinearProgram, Result};

/// The budget LP of one realization of the t-stage budget instance.
pub fn budget_staged_lp(t: usize, seed: u64) -> Result<LinearProgram> {
    let inst = make_budget_staged(t, seed)?;
    let (schedule, arrivals) = realize(&inst, seed)?;
    Ok(budget_lp_for_instance(&inst, &arrivals, &schedule)?.lp)
}
