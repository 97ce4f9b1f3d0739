//! Closed-loop simulation: solve the MPC each control step, apply the
//! first input (or the fallback), advance the plant, and account grid
//! energy with the exact rectifier over the PV slices.
//!
//! The plant behind the controller is either the identified linear
//! model, optionally perturbed each step by a uniform draw from the
//! one-step error box, or the full network simulator. Runs can cover
//! an arbitrary list of days; state carries over between listed days.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pv::{sample_scenarios_fast, PvStochasticModel, SampledYear};
use crate::seed;
use crate::wdn::{grid_power, LinearWdnModel, TankBounds, ToyNetworkSpec, TruthSim};

use super::cost::MpcConfig;
use super::mpc::{solve_mpc, MpcStatus};
use super::periodic::PeriodicTrajectory;

/// Anything the controller can drive: reports its reduced state,
/// prices its pumping, and advances one control step.
pub trait Plant {
    fn state(&self) -> DVector<f64>;
    /// Electrical power drawn at the current state, kW, clamped at
    /// zero per pump.
    fn pump_power_kw(&mut self, u: &DVector<f64>, d_a: f64) -> Result<f64>;
    fn step(&mut self, u: &DVector<f64>, d_a: f64, dt_s: f64) -> Result<()>;
}

/// The identified linear model as the plant, with an optional uniform
/// disturbance from the one-step error box added after each step.
pub struct LinearPlant {
    model: LinearWdnModel,
    h: DVector<f64>,
    disturbance: Option<(ChaCha8Rng, Vec<f64>)>,
}

impl LinearPlant {
    pub fn new(model: LinearWdnModel, h0: DVector<f64>) -> Result<Self> {
        if model.dt_s == 0.0 {
            return Err(Error::Parameter("plant model is not discretized".into()));
        }
        if h0.len() != model.n_states() {
            return Err(Error::Input("initial state dimension mismatch".into()));
        }
        Ok(LinearPlant { model, h: h0, disturbance: None })
    }

    /// Adds a per-step disturbance drawn uniformly from the box
    /// `[-w, w]` per state.
    pub fn with_disturbance(mut self, w: Vec<f64>, seed_value: u64) -> Result<Self> {
        if w.len() != self.model.n_states() {
            return Err(Error::Input("disturbance box dimension mismatch".into()));
        }
        if w.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Parameter("disturbance half-widths must be non-negative".into()));
        }
        self.disturbance = Some((seed::rng(seed_value, "plant-disturbance", 0), w));
        Ok(self)
    }
}

impl Plant for LinearPlant {
    fn state(&self) -> DVector<f64> {
        self.h.clone()
    }

    fn pump_power_kw(&mut self, u: &DVector<f64>, _d_a: f64) -> Result<f64> {
        Ok(self.model.total_pump_power_kw(&self.h, u))
    }

    fn step(&mut self, u: &DVector<f64>, d_a: f64, dt_s: f64) -> Result<()> {
        if (dt_s - self.model.dt_s).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "plant is discretized at {} s, stepped at {dt_s} s",
                self.model.dt_s
            )));
        }
        self.h = self.model.linear_step(&self.h, u, d_a)?;
        if let Some((rng, w)) = &mut self.disturbance {
            for i in 0..self.h.len() {
                if w[i] > 0.0 {
                    self.h[i] += rng.gen_range(-w[i]..=w[i]);
                }
            }
        }
        Ok(())
    }
}

/// The full network simulator as the plant.
pub struct TruthPlant {
    sim: TruthSim,
}

impl TruthPlant {
    pub fn new(spec: ToyNetworkSpec) -> Result<Self> {
        Ok(TruthPlant { sim: TruthSim::new(spec)? })
    }

    pub fn set_levels(&mut self, levels: &[f64]) -> Result<()> {
        self.sim.set_levels(levels)
    }
}

impl Plant for TruthPlant {
    fn state(&self) -> DVector<f64> {
        DVector::from_vec(self.sim.reduced_state())
    }

    fn pump_power_kw(&mut self, u: &DVector<f64>, d_a: f64) -> Result<f64> {
        let p_out = self.sim.outlet_pressures(u.as_slice(), d_a)?;
        let eff = self.sim.spec.pump_efficiency;
        let mut total = 0.0;
        for (i, pump) in self.sim.spec.pumps.iter().enumerate() {
            total += (u[i] * (p_out[i] - pump.inlet_pressure_pa) / eff / 1000.0).max(0.0);
        }
        Ok(total)
    }

    fn step(&mut self, u: &DVector<f64>, d_a: f64, dt_s: f64) -> Result<()> {
        self.sim.step(u.as_slice(), d_a, dt_s)
    }
}

/// PV seen by the loop: either none at all, or a sampled year with the
/// stochastic model that produced it (for conditional scenarios).
pub enum PvFeed<'a> {
    None,
    Stochastic { model: &'a PvStochasticModel, year: &'a SampledYear },
}

/// Stored plan of the last solved step; hands out successive inputs
/// while solves keep failing, clamping at the final one.
#[derive(Debug, Clone)]
pub struct FallbackPlan {
    seq: DMatrix<f64>,
    next: usize,
}

impl FallbackPlan {
    pub fn new(seq: DMatrix<f64>) -> Self {
        FallbackPlan { seq, next: 1 }
    }

    /// The next input of the stored sequence; the shift advances on
    /// every call.
    pub fn fallback_input(&mut self) -> DVector<f64> {
        let idx = self.next.min(self.seq.ncols() - 1);
        self.next += 1;
        self.seq.column(idx).clone_owned()
    }
}

/// One accounting slice of the run.
#[derive(Debug, Clone)]
pub struct TraceRow {
    /// Simulation time, hours from the start of the run.
    pub time_h: f64,
    pub h: Vec<f64>,
    pub u: Vec<f64>,
    pub d_a: f64,
    pub pump_kw: f64,
    pub pv_kw: f64,
    pub grid_kw: f64,
    pub price: f64,
}

/// Aggregates of a run.
#[derive(Debug, Clone, Default)]
pub struct CostLedger {
    pub grid_cost_eur: f64,
    pub infeasible_steps: usize,
    /// Control steps after which the plant state sat outside the level
    /// box.
    pub violation_steps: usize,
    pub solves: usize,
    /// Distance from the periodic reference at each midnight after the
    /// first simulated day.
    pub boundary_distances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopResult {
    pub trace: Vec<TraceRow>,
    pub ledger: CostLedger,
}

fn check_feeds(
    days: &[usize],
    steps: usize,
    slices: usize,
    pv: &PvFeed,
    prices: &[f64],
    demand: &[f64],
    forecast: Option<&[f64]>,
) -> Result<()> {
    if days.is_empty() {
        return Err(Error::Input("no days to simulate".into()));
    }
    let need = (days.iter().max().unwrap() + 1) * steps;
    if prices.len() < need || demand.len() < need {
        return Err(Error::Input(format!(
            "price and demand feeds must cover {need} hours"
        )));
    }
    if let Some(f) = forecast {
        if f.len() < need {
            return Err(Error::Input(format!("demand forecast must cover {need} hours")));
        }
    }
    if let PvFeed::Stochastic { year, .. } = pv {
        if year.samples_per_day != steps * slices {
            return Err(Error::Input(format!(
                "PV year has {} samples per day, expected {}",
                year.samples_per_day,
                steps * slices
            )));
        }
        if let Some(&d) = days.iter().max() {
            if d >= year.days.len() {
                return Err(Error::Input(format!(
                    "day {d} outside the sampled PV year of {} days",
                    year.days.len()
                )));
            }
        }
    }
    Ok(())
}

/// Runs the controller over the listed days. Feeds are indexed by
/// calendar hour `24*day + hour`; the trace clock is contiguous even
/// when the day list is strided.
#[allow(clippy::too_many_arguments)]
pub fn run_closed_loop(
    plant: &mut dyn Plant,
    model: &LinearWdnModel,
    bounds: &TankBounds,
    cfg: &MpcConfig,
    periodic: &PeriodicTrajectory,
    pv: &PvFeed,
    days: &[usize],
    prices: &[f64],
    demand: &[f64],
    demand_forecast: &[f64],
    seed_value: u64,
) -> Result<ClosedLoopResult> {
    let steps = cfg.steps_per_day();
    let slices = cfg.slices_per_step();
    cfg.validate(model.n_states())?;
    check_feeds(days, steps, slices, pv, prices, demand, Some(demand_forecast))?;

    let slice_h = cfg.dt_pv_s / 3600.0;
    let m = model.n_pumps();
    let h_star_end: DVector<f64> = periodic.h_star.column(0).clone_owned();
    let zero_day = vec![0.0; steps * slices];
    let mut rng = seed::rng(seed_value, "mpc-scenarios", 0);

    let mut trace = Vec::with_capacity(days.len() * steps * slices);
    let mut ledger = CostLedger::default();
    let mut prev_plan: Option<DMatrix<f64>> = None;
    let mut fallback: Option<FallbackPlan> = None;

    for (pos, &day) in days.iter().enumerate() {
        for hour in 0..steps {
            let idx = day * steps + hour;
            let h_now = plant.state();
            if hour == 0 && pos > 0 {
                ledger.boundary_distances.push((&h_now - &h_star_end).norm());
            }

            let n_steps = steps - hour;
            let scenarios: Vec<Vec<f64>> = match pv {
                PvFeed::None => vec![vec![0.0; n_steps * slices]; cfg.n_scenarios],
                PvFeed::Stochastic { model: pv_model, year } => {
                    let rec = &year.days[day];
                    let full = sample_scenarios_fast(
                        pv_model,
                        &rec.state,
                        &rec.x[..hour * slices],
                        cfg.n_scenarios,
                        &mut rng,
                    )?;
                    full.into_iter().map(|v| v[hour * slices..].to_vec()).collect()
                }
            };

            let d_hat = &demand_forecast[idx..day * steps + steps];
            let price_win = &prices[idx..day * steps + steps];
            let mut warm: Vec<DMatrix<f64>> = Vec::new();
            if let Some(p) = &prev_plan {
                if p.ncols() == n_steps + 1 {
                    warm.push(p.columns(1, n_steps).clone_owned());
                }
            }
            warm.push(periodic.u_star.columns(hour, n_steps).clone_owned());

            let sol = solve_mpc(
                &h_now,
                hour as f64 * cfg.dt_s,
                model,
                bounds,
                cfg,
                &scenarios,
                d_hat,
                price_win,
                &h_star_end,
                &warm,
            )?;
            ledger.solves += 1;

            let u_apply = match sol.status {
                MpcStatus::Solved => {
                    fallback = Some(FallbackPlan::new(sol.u.clone()));
                    sol.u.column(0).clone_owned()
                }
                MpcStatus::InfeasibleFallback => {
                    ledger.infeasible_steps += 1;
                    match &mut fallback {
                        Some(f) => f.fallback_input(),
                        None => DVector::zeros(m),
                    }
                }
            };
            prev_plan = Some(sol.u);

            let d_a = demand[idx];
            let pump_kw = plant.pump_power_kw(&u_apply, d_a)?;
            let pv_day: &[f64] = match pv {
                PvFeed::None => &zero_day,
                PvFeed::Stochastic { year, .. } => &year.days[day].x,
            };
            for s in 0..slices {
                let pv_kw = pv_day[hour * slices + s];
                let g = grid_power(pump_kw, pv_kw);
                ledger.grid_cost_eur += prices[idx] * g * slice_h;
                trace.push(TraceRow {
                    time_h: (pos * steps + hour) as f64 + s as f64 * slice_h,
                    h: h_now.as_slice().to_vec(),
                    u: u_apply.as_slice().to_vec(),
                    d_a,
                    pump_kw,
                    pv_kw,
                    grid_kw: g,
                    price: prices[idx],
                });
            }

            plant.step(&u_apply, d_a, cfg.dt_s)?;
            if !bounds.contains(plant.state().as_slice()) {
                ledger.violation_steps += 1;
            }
        }
    }

    Ok(ClosedLoopResult { trace, ledger })
}

/// Applies a fixed input every step over the listed days with the same
/// accounting as the controller run. The cost baseline.
pub fn run_constant_flow(
    plant: &mut dyn Plant,
    u: &DVector<f64>,
    cfg: &MpcConfig,
    bounds: &TankBounds,
    pv: &PvFeed,
    days: &[usize],
    prices: &[f64],
    demand: &[f64],
) -> Result<ClosedLoopResult> {
    let steps = cfg.steps_per_day();
    let slices = cfg.slices_per_step();
    check_feeds(days, steps, slices, pv, prices, demand, None)?;

    let slice_h = cfg.dt_pv_s / 3600.0;
    let zero_day = vec![0.0; steps * slices];
    let mut trace = Vec::with_capacity(days.len() * steps * slices);
    let mut ledger = CostLedger::default();

    for (pos, &day) in days.iter().enumerate() {
        for hour in 0..steps {
            let idx = day * steps + hour;
            let d_a = demand[idx];
            let h_now = plant.state();
            let pump_kw = plant.pump_power_kw(u, d_a)?;
            let pv_day: &[f64] = match pv {
                PvFeed::None => &zero_day,
                PvFeed::Stochastic { year, .. } => &year.days[day].x,
            };
            for s in 0..slices {
                let pv_kw = pv_day[hour * slices + s];
                let g = grid_power(pump_kw, pv_kw);
                ledger.grid_cost_eur += prices[idx] * g * slice_h;
                trace.push(TraceRow {
                    time_h: (pos * steps + hour) as f64 + s as f64 * slice_h,
                    h: h_now.as_slice().to_vec(),
                    u: u.as_slice().to_vec(),
                    d_a,
                    pump_kw,
                    pv_kw,
                    grid_kw: g,
                    price: prices[idx],
                });
            }
            plant.step(u, d_a, cfg.dt_s)?;
            if !bounds.contains(plant.state().as_slice()) {
                ledger.violation_steps += 1;
            }
        }
    }
    Ok(ClosedLoopResult { trace, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empc::periodic::compute_periodic_trajectory;
    use approx::assert_relative_eq;

    fn scalar_model() -> LinearWdnModel {
        let mut m = LinearWdnModel::new(
            DMatrix::from_row_slice(1, 1, &[-1e-5]),
            DMatrix::from_row_slice(1, 1, &[5e-3]),
            DVector::from_column_slice(&[-4e-3]),
            DMatrix::from_row_slice(1, 1, &[9.0e4]),
            DMatrix::from_row_slice(1, 1, &[2.0e4]),
            DVector::from_column_slice(&[19_620.0]),
            0.75,
        )
        .unwrap();
        m.discretize(3600.0).unwrap();
        m
    }

    fn scalar_bounds() -> TankBounds {
        TankBounds::new(vec![1.0], vec![4.0], vec![0.1]).unwrap()
    }

    fn day_profiles() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d: Vec<f64> = (0..24)
            .map(|h| {
                0.05 * (1.0 + 0.3 * (2.0 * std::f64::consts::PI * (h as f64 - 11.0) / 24.0).sin())
            })
            .collect();
        let c: Vec<f64> = (0..24)
            .map(|h| if (18..22).contains(&h) { 0.48 } else { 0.14 })
            .collect();
        let pv = vec![0.0; 96];
        (d, c, pv)
    }

    #[test]
    fn fallback_plan_shifts_and_clamps() {
        let mut plan = FallbackPlan::new(DMatrix::from_column_slice(
            1,
            3,
            &[0.01, 0.02, 0.03],
        ));
        assert_relative_eq!(plan.fallback_input()[0], 0.02);
        assert_relative_eq!(plan.fallback_input()[0], 0.03);
        assert_relative_eq!(plan.fallback_input()[0], 0.03);

        let mut single = FallbackPlan::new(DMatrix::from_column_slice(1, 1, &[0.07]));
        assert_relative_eq!(single.fallback_input()[0], 0.07);
        assert_relative_eq!(single.fallback_input()[0], 0.07);
    }

    #[test]
    fn closed_loop_tracks_the_periodic_cycle() {
        let model = scalar_model();
        let bounds = scalar_bounds();
        let mut cfg = MpcConfig::defaults(1);
        cfg.n_scenarios = 2;
        let (d_day, c_day, pv_day) = day_profiles();
        let periodic =
            compute_periodic_trajectory(&model, &bounds, &cfg, &d_day, &c_day, &pv_day).unwrap();

        let n_days = 4;
        let prices: Vec<f64> = (0..n_days).flat_map(|_| c_day.clone()).collect();
        let demand: Vec<f64> = (0..n_days).flat_map(|_| d_day.clone()).collect();
        let days: Vec<usize> = (0..n_days).collect();

        // Start away from the reference to exercise the approach.
        let h0 = DVector::from_column_slice(&[periodic.h_star[(0, 0)] + 0.4]);
        let mut plant = LinearPlant::new(model.clone(), h0).unwrap();
        let out = run_closed_loop(
            &mut plant,
            &model,
            &bounds,
            &cfg,
            &periodic,
            &PvFeed::None,
            &days,
            &prices,
            &demand,
            &demand,
            7,
        )
        .unwrap();

        assert_eq!(out.ledger.violation_steps, 0);
        assert_eq!(out.ledger.solves, 96);
        assert_eq!(out.trace.len(), 96 * 4);
        for row in &out.trace {
            assert!(row.u.iter().all(|&v| (0.0..=0.1 + 1e-12).contains(&v)));
            assert!(row.grid_kw >= 0.0);
        }
        // Midnight states settle into the terminal ball.
        let last = *out.ledger.boundary_distances.last().unwrap();
        assert!(last <= cfg.terminal_radius_m + 1e-6, "distance {last}");
    }

    #[test]
    fn controller_beats_the_constant_baseline_on_time_of_use_prices() {
        let model = scalar_model();
        let bounds = scalar_bounds();
        let mut cfg = MpcConfig::defaults(1);
        cfg.n_scenarios = 1;
        let (d_day, c_day, pv_day) = day_profiles();
        let periodic =
            compute_periodic_trajectory(&model, &bounds, &cfg, &d_day, &c_day, &pv_day).unwrap();

        let n_days = 3;
        let prices: Vec<f64> = (0..n_days).flat_map(|_| c_day.clone()).collect();
        let demand: Vec<f64> = (0..n_days).flat_map(|_| d_day.clone()).collect();
        let days: Vec<usize> = (0..n_days).collect();
        let h0: DVector<f64> = periodic.h_star.column(0).clone_owned();

        let mut plant = LinearPlant::new(model.clone(), h0.clone()).unwrap();
        let mpc = run_closed_loop(
            &mut plant,
            &model,
            &bounds,
            &cfg,
            &periodic,
            &PvFeed::None,
            &days,
            &prices,
            &demand,
            &demand,
            1,
        )
        .unwrap();

        let mean_d = demand.iter().sum::<f64>() / demand.len() as f64;
        let mut base_plant = LinearPlant::new(model.clone(), h0).unwrap();
        let base = run_constant_flow(
            &mut base_plant,
            &DVector::from_column_slice(&[mean_d]),
            &cfg,
            &bounds,
            &PvFeed::None,
            &days,
            &prices,
            &demand,
        )
        .unwrap();

        assert!(
            mpc.ledger.grid_cost_eur < base.ledger.grid_cost_eur,
            "mpc {} baseline {}",
            mpc.ledger.grid_cost_eur,
            base.ledger.grid_cost_eur
        );
    }

    #[test]
    fn truth_plant_reports_state_and_power() {
        let mut plant = TruthPlant::new(ToyNetworkSpec::toy()).unwrap();
        let s = plant.state();
        assert_eq!(s.len(), 2);
        let u = DVector::from_column_slice(&[0.05, 0.05]);
        let p = plant.pump_power_kw(&u, 0.08).unwrap();
        assert!(p > 0.0);
        plant.step(&u, 0.08, 3600.0).unwrap();
        assert_eq!(plant.state().len(), 2);
    }

    #[test]
    fn disturbed_plant_stays_near_the_nominal_step() {
        let model = scalar_model();
        let h0 = DVector::from_column_slice(&[2.0]);
        let u = DVector::from_column_slice(&[0.05]);
        let mut nominal = LinearPlant::new(model.clone(), h0.clone()).unwrap();
        nominal.step(&u, 0.05, 3600.0).unwrap();
        let mut noisy = LinearPlant::new(model.clone(), h0)
            .unwrap()
            .with_disturbance(vec![0.1], 3)
            .unwrap();
        noisy.step(&u, 0.05, 3600.0).unwrap();
        let gap = (noisy.state() - nominal.state()).amax();
        assert!(gap <= 0.1 + 1e-12, "gap {gap}");
    }

    #[test]
    fn feeds_shorter_than_the_run_are_rejected() {
        let model = scalar_model();
        let bounds = scalar_bounds();
        let cfg = MpcConfig::defaults(1);
        let (d_day, c_day, pv_day) = day_profiles();
        let periodic =
            compute_periodic_trajectory(&model, &bounds, &cfg, &d_day, &c_day, &pv_day).unwrap();
        let mut plant =
            LinearPlant::new(model.clone(), DVector::from_column_slice(&[2.0])).unwrap();
        let r = run_closed_loop(
            &mut plant,
            &model,
            &bounds,
            &cfg,
            &periodic,
            &PvFeed::None,
            &[0, 1],
            &c_day,
            &d_day,
            &d_day,
            0,
        );
        assert!(r.is_err());
    }
}
