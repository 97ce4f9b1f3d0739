//! Lifetime cost pieces: CAPEX, the simulated yearly OPEX, and their
//! combination over the panel lifespan.
//!
//! One OPEX evaluation runs the whole pipeline for a candidate size x:
//! scale the panel to the effective test-condition power, regenerate
//! the synthetic production history from the shared weather record,
//! refit the stochastic production model, sample one year, compute the
//! periodic reference, and run the controller over the selected days.
//! The electricity bill is extrapolated linearly when fewer than 365
//! days are simulated; the maintenance term is always a full year.

use crate::empc::{
    compute_periodic_trajectory, run_closed_loop, CostLedger, LinearPlant, MpcConfig, PvFeed,
};
use crate::error::{Error, Result};
use crate::pv::{
    fit_pv_model, generate_synthetic_series, sample_year, PvPanelParams, StochasticFitConfig,
    WeatherSample,
};
use crate::seed;
use crate::wdn::{LinearWdnModel, TankBounds};

/// Installed sizes below this are treated as no installation at all;
/// the stochastic model cannot be fitted to an identically zero series.
const X_ZERO_KW: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CostParams {
    /// Installation price, EUR per watt.
    pub a_ins_eur_per_w: f64,
    /// Yearly maintenance price, EUR per kilowatt.
    pub a_m_eur_per_kw_yr: f64,
    /// Constant average panel efficiency over the lifespan.
    pub lambda_pv: f64,
    /// Panel lifespan, years.
    pub lifespan_yr: u32,
    /// Efficiency loss per year.
    pub degradation_per_yr: f64,
}

impl CostParams {
    /// Parameters for a given lifespan with the efficiency set to the
    /// lifetime average under linear degradation.
    pub fn for_lifespan(lifespan_yr: u32) -> Self {
        let degradation_per_yr = 0.0015;
        CostParams {
            a_ins_eur_per_w: 2.0,
            a_m_eur_per_kw_yr: 17.0,
            lambda_pv: 1.0 - degradation_per_yr * lifespan_yr as f64 / 2.0,
            lifespan_yr,
            degradation_per_yr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_ins_eur_per_w >= 0.0) || !(self.a_m_eur_per_kw_yr >= 0.0) {
            return Err(Error::Parameter("unit costs must be nonnegative".into()));
        }
        if !(self.lambda_pv > 0.0 && self.lambda_pv <= 1.0) {
            return Err(Error::Parameter(format!(
                "average efficiency {} outside (0, 1]",
                self.lambda_pv
            )));
        }
        if self.lifespan_yr == 0 {
            return Err(Error::Parameter("lifespan must be at least one year".into()));
        }
        if !(self.degradation_per_yr >= 0.0) {
            return Err(Error::Parameter("degradation rate must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams::for_lifespan(25)
    }
}

/// Installation cost of `x_kw` installed kilowatts.
pub fn capex(x_kw: f64, params: &CostParams) -> Result<f64> {
    params.validate()?;
    if !(x_kw >= 0.0) {
        return Err(Error::Input(format!("installed amount {x_kw} must be nonnegative")));
    }
    Ok(params.a_ins_eur_per_w * 1000.0 * x_kw)
}

/// Everything one OPEX evaluation needs besides the candidate size.
pub struct SizingStack<'a> {
    /// Shared weather record; identical for every candidate size.
    pub weather: &'a [WeatherSample],
    /// Reference panel; rescaled to the effective power per candidate.
    pub panel: &'a PvPanelParams,
    pub samples_per_day: usize,
    pub fit_cfg: &'a StochasticFitConfig,
    pub model: &'a LinearWdnModel,
    pub bounds: &'a TankBounds,
    pub mpc: &'a MpcConfig,
    /// Hourly electricity prices covering every simulated day.
    pub prices: &'a [f64],
    /// Hourly true demand covering every simulated day.
    pub demand: &'a [f64],
    /// Hourly demand forecast handed to the controller.
    pub demand_forecast: &'a [f64],
    /// Calendar days to simulate; the bill scales up by 365/len.
    pub days: &'a [usize],
}

/// One simulated year of operating cost.
#[derive(Debug, Clone)]
pub struct OpexOutcome {
    /// Full OPEX: maintenance plus the extrapolated bill.
    pub opex_eur: f64,
    pub maintenance_eur: f64,
    /// Grid electricity bill extrapolated to 365 days.
    pub grid_eur: f64,
    pub ledger: CostLedger,
}

/// `n` calendar days spread evenly across the year.
pub fn strided_days(n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > 365 {
        return Err(Error::Input(format!("day count {n} outside 1..=365")));
    }
    Ok((0..n).map(|i| i * 365 / n).collect())
}

fn hourly_day_means(series: &[f64], days: &[usize], steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; steps];
    for &d in days {
        for (h, o) in out.iter_mut().enumerate() {
            *o += series[d * steps + h];
        }
    }
    for o in &mut out {
        *o /= days.len() as f64;
    }
    out
}

/// Simulated operating cost of one year at `x_kw` installed kilowatts.
pub fn yearly_opex(
    x_kw: f64,
    params: &CostParams,
    stack: &SizingStack,
    seed_value: u64,
) -> Result<OpexOutcome> {
    params.validate()?;
    if !(x_kw >= 0.0) {
        return Err(Error::Input(format!("installed amount {x_kw} must be nonnegative")));
    }
    let steps = stack.mpc.steps_per_day();
    let slices = stack.mpc.slices_per_step();
    if stack.samples_per_day != steps * slices {
        return Err(Error::Input(format!(
            "PV sampling at {} values per day does not match the controller's {}",
            stack.samples_per_day,
            steps * slices
        )));
    }
    if stack.days.is_empty() {
        return Err(Error::Input("no days selected for the OPEX run".into()));
    }

    let sampled;
    let pv_model;
    let feed = if x_kw < X_ZERO_KW {
        PvFeed::None
    } else {
        let panel = stack.panel.scaled_to(params.lambda_pv * x_kw)?;
        let series = generate_synthetic_series(stack.weather, &panel, stack.samples_per_day)?;
        let fit = fit_pv_model(&series, stack.fit_cfg)?;
        let mut rng = seed::rng(seed_value, "opex-year", 0);
        sampled = sample_year(&fit.model, fit.init_state, &mut rng)?;
        pv_model = fit.model;
        PvFeed::Stochastic { model: &pv_model, year: &sampled }
    };

    let d_star = hourly_day_means(stack.demand, stack.days, steps);
    let c_star = hourly_day_means(stack.prices, stack.days, steps);
    let pv_star = match &feed {
        PvFeed::None => vec![0.0; steps * slices],
        PvFeed::Stochastic { year, .. } => {
            let mut out = vec![0.0; steps * slices];
            for &d in stack.days {
                for (s, o) in out.iter_mut().enumerate() {
                    *o += year.days[d].x[s];
                }
            }
            for o in &mut out {
                *o /= stack.days.len() as f64;
            }
            out
        }
    };

    let periodic = compute_periodic_trajectory(
        stack.model,
        stack.bounds,
        stack.mpc,
        &d_star,
        &c_star,
        &pv_star,
    )?;
    let h0 = periodic.h_star.column(0).clone_owned();
    let mut plant = LinearPlant::new(stack.model.clone(), h0)?;
    let out = run_closed_loop(
        &mut plant,
        stack.model,
        stack.bounds,
        stack.mpc,
        &periodic,
        &feed,
        stack.days,
        stack.prices,
        stack.demand,
        stack.demand_forecast,
        seed_value,
    )?;

    let scale = 365.0 / stack.days.len() as f64;
    let maintenance_eur = if x_kw < X_ZERO_KW { 0.0 } else { params.a_m_eur_per_kw_yr * x_kw };
    let grid_eur = out.ledger.grid_cost_eur * scale;
    Ok(OpexOutcome {
        opex_eur: maintenance_eur + grid_eur,
        maintenance_eur,
        grid_eur,
        ledger: out.ledger,
    })
}

#[derive(Debug, Clone)]
pub struct TotalCost {
    /// CAPEX plus lifespan years of OPEX.
    pub total_eur: f64,
    pub capex_eur: f64,
    pub opex: OpexOutcome,
}

/// Lifetime cost of `x_kw`: installation plus a lifespan of simulated
/// yearly operation, the year approximated by a single sample.
pub fn total_cost(
    x_kw: f64,
    params: &CostParams,
    stack: &SizingStack,
    seed_value: u64,
) -> Result<TotalCost> {
    let capex_eur = capex(x_kw, params)?;
    let opex = yearly_opex(x_kw, params, stack, seed_value)?;
    Ok(TotalCost {
        total_eur: capex_eur + params.lifespan_yr as f64 * opex.opex_eur,
        capex_eur,
        opex,
    })
}
