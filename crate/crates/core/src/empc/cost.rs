//! Cost primitives of the economic MPC: the shrinking horizon, the
//! exponential level barrier, the softplus grid-energy term, and the
//! smooth pump power used inside the optimizer.
//!
//! The barrier attaches one term `exp(a (F + b))` to each of the 2n
//! level constraints, where `F` is the signed violation: `F = h - hmax`
//! for an upper bound and `F = hmin - h` for a lower bound. Constraint
//! 2i is the upper bound of state i and constraint 2i+1 its lower
//! bound. The electricity term prices the shortfall of PV against pump
//! power through a softplus, so the whole objective stays smooth.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::wdn::{LinearWdnModel, TankBounds};

pub const T_DAY_S: f64 = 86_400.0;

/// Settings of the scenario MPC: barrier shape, softplus sharpness,
/// scenario count, step sizes, terminal ball, one-step error box, and
/// solver knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// Barrier steepness per constraint, 1/m; 2n entries.
    pub barrier_a: DVector<f64>,
    /// Barrier offset per constraint, m; 2n entries.
    pub barrier_b: DVector<f64>,
    /// Softplus sharpness, 1/kW.
    pub beta: f64,
    /// Scenarios per solve.
    pub n_scenarios: usize,
    /// Control step, s.
    pub dt_s: f64,
    /// PV accounting step, s; divides `dt_s`.
    pub dt_pv_s: f64,
    /// Radius of the terminal ball around the periodic reference, m.
    pub terminal_radius_m: f64,
    /// Half-width of the one-step model error box per state, m.
    pub w_box: Vec<f64>,
    /// Projected-gradient tolerance of the solver.
    pub grad_tol: f64,
    /// Iteration cap per solver run.
    pub max_iters: usize,
    /// Initial weight of the terminal (or periodicity) penalty.
    pub penalty_init: f64,
    /// Multiplicative growth of the penalty between restarts.
    pub penalty_growth: f64,
    /// Number of penalty restarts before giving up.
    pub penalty_rounds: usize,
}

impl MpcConfig {
    /// Defaults for an `n`-state network: a=80, b=0.2 on every
    /// constraint, beta=1, S=10, hourly control with 15-minute PV
    /// slices, r=0.05 m and a 0.1 m error box.
    pub fn defaults(n: usize) -> Self {
        MpcConfig {
            barrier_a: DVector::from_element(2 * n, 80.0),
            barrier_b: DVector::from_element(2 * n, 0.2),
            beta: 1.0,
            n_scenarios: 10,
            dt_s: 3600.0,
            dt_pv_s: 900.0,
            terminal_radius_m: 0.05,
            w_box: vec![0.1; n],
            grad_tol: 1e-6,
            max_iters: 200,
            penalty_init: 1e3,
            penalty_growth: 10.0,
            penalty_rounds: 5,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.barrier_a.len() != 2 * n || self.barrier_b.len() != 2 * n {
            return Err(Error::Parameter(format!(
                "barrier parameters need {} entries",
                2 * n
            )));
        }
        if self.barrier_a.iter().any(|&a| !(a > 0.0))
            || self.barrier_b.iter().any(|&b| !(b > 0.0))
        {
            return Err(Error::Parameter("barrier parameters must be positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Parameter("softplus beta must be positive".into()));
        }
        if self.n_scenarios == 0 {
            return Err(Error::Parameter("at least one scenario is required".into()));
        }
        if !(self.dt_s > 0.0) || !(self.dt_pv_s > 0.0) {
            return Err(Error::Parameter("steps must be positive".into()));
        }
        let ratio = self.dt_s / self.dt_pv_s;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(Error::Parameter(format!(
                "PV step must divide the control step, got {} / {}",
                self.dt_s, self.dt_pv_s
            )));
        }
        if !(self.terminal_radius_m > 0.0) {
            return Err(Error::Parameter("terminal radius must be positive".into()));
        }
        if self.w_box.len() != n {
            return Err(Error::Parameter(format!("error box needs {n} entries")));
        }
        if self.w_box.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Parameter("error box widths must be non-negative".into()));
        }
        if self.max_iters == 0 || self.penalty_rounds == 0 {
            return Err(Error::Parameter("iteration caps must be positive".into()));
        }
        if !(self.penalty_init > 0.0) || !(self.penalty_growth > 1.0) {
            return Err(Error::Parameter("penalty ramp must grow".into()));
        }
        Ok(())
    }

    /// PV slices per control step.
    pub fn slices_per_step(&self) -> usize {
        (self.dt_s / self.dt_pv_s).round() as usize
    }

    /// Control steps per day.
    pub fn steps_per_day(&self) -> usize {
        (T_DAY_S / self.dt_s).round() as usize
    }
}

/// Steps remaining until the next day boundary at time `t_s`.
pub fn horizon_length(t_s: f64, dt_s: f64, t_day_s: f64) -> Result<usize> {
    if !(dt_s > 0.0) || !(t_day_s > 0.0) {
        return Err(Error::Parameter("steps must be positive".into()));
    }
    let per_day = t_day_s / dt_s;
    if (per_day - per_day.round()).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "control step {dt_s} does not divide the day {t_day_s}"
        )));
    }
    if !t_s.is_finite() || t_s < 0.0 {
        return Err(Error::Input(format!("time must be finite and non-negative, got {t_s}")));
    }
    let into_day = t_s.rem_euclid(t_day_s);
    let n = ((t_day_s - into_day) / dt_s).round() as usize;
    Ok(n.clamp(1, per_day.round() as usize))
}

/// Numerically stable softplus `(1/beta) ln(1 + exp(beta x))`.
pub fn softplus(x: f64, beta: f64) -> f64 {
    let z = beta * x;
    if z > 0.0 {
        x + (-z).exp().ln_1p() / beta
    } else {
        z.exp().ln_1p() / beta
    }
}

/// Derivative of the softplus: the logistic function at `beta x`.
pub fn softplus_deriv(x: f64, beta: f64) -> f64 {
    let z = beta * x;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sum of the 2n exponential barrier terms at the level vector `h`.
pub fn barrier_cost(h: &DVector<f64>, bounds: &TankBounds, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..h.len() {
        let f_up = h[i] - bounds.h_max[i];
        let f_lo = bounds.h_min[i] - h[i];
        total += (a[2 * i] * (f_up + b[2 * i])).exp();
        total += (a[2 * i + 1] * (f_lo + b[2 * i + 1])).exp();
    }
    total
}

/// Gradient of [`barrier_cost`] with respect to `h`.
pub fn barrier_grad(
    h: &DVector<f64>,
    bounds: &TankBounds,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_fn(h.len(), |i, _| {
        let f_up = h[i] - bounds.h_max[i];
        let f_lo = bounds.h_min[i] - h[i];
        a[2 * i] * (a[2 * i] * (f_up + b[2 * i])).exp()
            - a[2 * i + 1] * (a[2 * i + 1] * (f_lo + b[2 * i + 1])).exp()
    })
}

/// Smooth (unclamped) total electrical pump power, kW. The accounting
/// path clamps each pump at zero; the optimizer needs the raw bilinear
/// form so its gradients stay exact.
pub fn mpc_power_kw(model: &LinearWdnModel, h: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let p_out = model.outlet_pressures(h, u);
    let mut total = 0.0;
    for i in 0..u.len() {
        total += u[i] * (p_out[i] - model.p_in[i]);
    }
    total / model.efficiency / 1000.0
}

/// Partial derivatives of [`mpc_power_kw`] in `h` and `u`.
pub fn mpc_power_grads(
    model: &LinearWdnModel,
    h: &DVector<f64>,
    u: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let scale = 1.0 / model.efficiency / 1000.0;
    let dh = (model.c.transpose() * u) * scale;
    let du = (&model.c * h + (&model.d + model.d.transpose()) * u - &model.p_in) * scale;
    (dh, du)
}

/// One-scenario grid-energy cost of a PV step: `price * sp(P_p - P_pv)`
/// times the slice duration in hours.
pub fn softplus_grid_cost(pump_kw: f64, pv_kw: f64, price: f64, beta: f64, slice_h: f64) -> f64 {
    price * softplus(pump_kw - pv_kw, beta) * slice_h
}

/// One stage of the MPC objective: the barrier at `h` plus the priced
/// softplus shortfall against each PV slice of the step.
pub fn stage_cost(
    h: &DVector<f64>,
    u: &DVector<f64>,
    pv_slices: &[f64],
    price: f64,
    model: &LinearWdnModel,
    bounds: &TankBounds,
    cfg: &MpcConfig,
) -> f64 {
    let slice_h = cfg.dt_pv_s / 3600.0;
    let p = mpc_power_kw(model, h, u);
    let elec: f64 = pv_slices
        .iter()
        .map(|&pv| softplus_grid_cost(p, pv, price, cfg.beta, slice_h))
        .sum();
    barrier_cost(h, bounds, &cfg.barrier_a, &cfg.barrier_b) + elec
}
