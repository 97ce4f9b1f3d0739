//! End-to-end sizing: derivative-free search over the installed PV
//! power, then a smoothed re-read of the optimum for several lifespans.
//!
//! Every candidate size is scored by one simulated year whose seed is
//! derived from the candidate itself, so revisiting a size reproduces
//! the exact cost and a rerun of the whole search is bit-identical.
//! The search runs once, at the first lifespan; the remaining
//! lifespans reuse the exponential surrogate fitted to the logged grid
//! bills instead of paying for fresh simulations.

use super::cost::{total_cost, CostParams, SizingStack};
use super::expfit::{fit_exponential, smoothed_argmin, ExpFit};
use super::nelder_mead::{nelder_mead_minimize, NmConfig};
use crate::error::{Error, Result};
use crate::seed;

/// One scored candidate size.
#[derive(Debug, Clone)]
pub struct SizingEval {
    pub x_kw: f64,
    pub total_eur: f64,
    pub opex_eur: f64,
    pub capex_eur: f64,
    /// Yearly grid bill alone, the part the surrogate is fitted to.
    pub grid_eur: f64,
    pub seed: u64,
    pub violation_steps: usize,
}

/// Optimum for one lifespan.
#[derive(Debug, Clone)]
pub struct LifespanSummary {
    pub lifespan_yr: u32,
    /// Simulation-search optimum; only the first lifespan runs one.
    pub nm_x_kw: Option<f64>,
    pub nm_total_eur: Option<f64>,
    /// Optimum of the smoothed cost under the shared surrogate.
    pub expfit_x_kw: f64,
    pub expfit_total_eur: f64,
}

#[derive(Debug, Clone)]
pub struct SizingRun {
    /// Every simulated candidate in evaluation order.
    pub evals: Vec<SizingEval>,
    pub fit: ExpFit,
    pub summaries: Vec<LifespanSummary>,
    pub nm_iterations: usize,
    pub nm_converged: bool,
}

impl SizingRun {
    pub fn best(&self) -> &LifespanSummary {
        &self.summaries[0]
    }
}

fn params_for(proto: &CostParams, lifespan_yr: u32) -> CostParams {
    CostParams {
        lambda_pv: 1.0 - proto.degradation_per_yr * lifespan_yr as f64 / 2.0,
        lifespan_yr,
        ..proto.clone()
    }
}

/// Searches for the cheapest installed size starting from `x0_kw`,
/// then summarizes the optimum for each entry of `lifespans`.
pub fn run_sizing(
    proto: &CostParams,
    lifespans: &[u32],
    stack: &SizingStack,
    nm_cfg: &NmConfig,
    x0_kw: f64,
    base_seed: u64,
) -> Result<SizingRun> {
    proto.validate()?;
    if lifespans.is_empty() {
        return Err(Error::Input("at least one lifespan is required".into()));
    }
    let first = params_for(proto, lifespans[0]);

    let mut evals: Vec<SizingEval> = Vec::new();
    let outcome = {
        let oracle = |x: f64| -> Result<f64> {
            let seed_value = seed::derive(base_seed, "sizing-eval", x.to_bits());
            let cost = total_cost(x, &first, stack, seed_value)?;
            evals.push(SizingEval {
                x_kw: x,
                total_eur: cost.total_eur,
                opex_eur: cost.opex.opex_eur,
                capex_eur: cost.capex_eur,
                grid_eur: cost.opex.grid_eur,
                seed: seed_value,
                violation_steps: cost.opex.ledger.violation_steps,
            });
            Ok(cost.total_eur)
        };
        nelder_mead_minimize(oracle, x0_kw, nm_cfg)?
    };

    if evals.len() < 3 {
        return Err(Error::Numerical(format!(
            "only {} candidate sizes were simulated, too few for the surrogate",
            evals.len()
        )));
    }
    let xs: Vec<f64> = evals.iter().map(|e| e.x_kw).collect();
    let ys: Vec<f64> = evals.iter().map(|e| e.grid_eur).collect();
    let fit = fit_exponential(&xs, &ys)?;

    let x_reach = xs.iter().cloned().fold(0.0_f64, f64::max);
    let x_max = if x_reach > 0.0 { 2.0 * x_reach } else { 100.0 };

    let summaries = lifespans
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let p = params_for(proto, l);
            let x_fit = smoothed_argmin(
                &fit,
                x_max,
                p.a_ins_eur_per_w,
                p.a_m_eur_per_kw_yr,
                l as f64,
            );
            let total_fit = p.a_ins_eur_per_w * 1000.0 * x_fit
                + l as f64 * (p.a_m_eur_per_kw_yr * x_fit + fit.eval(x_fit));
            LifespanSummary {
                lifespan_yr: l,
                nm_x_kw: (i == 0).then_some(outcome.best_x),
                nm_total_eur: (i == 0).then_some(outcome.best_f),
                expfit_x_kw: x_fit,
                expfit_total_eur: total_fit,
            }
        })
        .collect();

    Ok(SizingRun {
        evals,
        fit,
        summaries,
        nm_iterations: outcome.iterations,
        nm_converged: outcome.converged,
    })
}
