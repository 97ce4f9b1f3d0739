//! PV sizing: lifetime cost model, yearly OPEX simulation, derivative
//! free minimization over the installed amount, and the exponential
//! post-fit of grid costs.

mod cost;
mod expfit;
mod nelder_mead;

pub use cost::{
    capex, strided_days, total_cost, yearly_opex, CostParams, OpexOutcome, SizingStack, TotalCost,
};
pub use expfit::{fit_exponential, smoothed_argmin, ExpFit};
pub use nelder_mead::{nelder_mead_minimize, NmConfig, NmOutcome};

mod run;
pub use run::{run_sizing, LifespanSummary, SizingEval, SizingRun};
