//! Stochastic economic MPC for pump scheduling: shrinking day horizon,
//! scenario-averaged electricity cost with a softplus rectifier,
//! exponential level barriers, a periodic daily reference with its
//! terminal set, and the closed-loop runner with the infeasibility
//! fallback.

pub mod closed_loop;
pub mod cost;
pub mod mpc;
pub mod periodic;
pub mod solver;

pub use closed_loop::{
    run_closed_loop, run_constant_flow, ClosedLoopResult, CostLedger, FallbackPlan, LinearPlant,
    Plant, PvFeed, TraceRow, TruthPlant,
};
pub use cost::{
    barrier_cost, horizon_length, mpc_power_kw, softplus, softplus_grid_cost, stage_cost,
    MpcConfig,
};
pub use mpc::{solve_mpc, MpcProblem, MpcSolution, MpcStatus};
pub use periodic::{compute_periodic_trajectory, PeriodicTrajectory, PERIODICITY_TOL};
