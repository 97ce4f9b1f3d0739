//! The optimal periodic daily trajectory: the one-day schedule, with
//! free initial level, that minimizes the deterministic economic cost
//! over average demand, price, and PV profiles while returning to its
//! starting level. It anchors the MPC terminal set and seeds warm
//! starts.
//!
//! Levels are confined to the level box eroded by the one-step error
//! box, so a controller tracking the trajectory under bounded model
//! error stays inside the true box. Periodicity is a ramped quadratic
//! penalty driven below a fixed tolerance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::wdn::{LinearWdnModel, TankBounds};

use super::cost::{
    barrier_cost, barrier_grad, mpc_power_grads, mpc_power_kw, softplus, softplus_deriv,
    MpcConfig,
};
use super::solver::{projected_lbfgs, SolveBox};

/// Allowed mismatch between the first and last level of the cycle, m.
pub const PERIODICITY_TOL: f64 = 1e-3;

/// A one-day cyclic schedule and the average profiles that produced
/// it.
#[derive(Debug, Clone)]
pub struct PeriodicTrajectory {
    /// Levels at step edges, n x (T+1); first and last column agree
    /// within [`PERIODICITY_TOL`].
    pub h_star: DMatrix<f64>,
    /// Pump flows, m x T.
    pub u_star: DMatrix<f64>,
    pub d_a_star: Vec<f64>,
    pub c_star: Vec<f64>,
    pub p_pv_star: Vec<f64>,
}

struct CycleProblem<'a> {
    model: &'a LinearWdnModel,
    shrunk: &'a TankBounds,
    cfg: &'a MpcConfig,
    d_a: &'a [f64],
    prices: &'a [f64],
    pv: &'a [f64],
    n_steps: usize,
}

impl CycleProblem<'_> {
    fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.model.n_states();
        let m = self.model.n_pumps();
        let h0 = DVector::from_fn(n, |i, _| z[i]);
        let u = DMatrix::from_column_slice(m, self.n_steps, &z.as_slice()[n..]);
        (h0, u)
    }

    fn rollout(&self, h0: &DVector<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.model.n_states();
        let mut h = DMatrix::zeros(n, self.n_steps + 1);
        h.set_column(0, h0);
        for j in 0..self.n_steps {
            let hj = h.column(j).clone_owned();
            let next = &self.model.a_d * hj
                + &self.model.b_d1 * u.column(j)
                + &self.model.b_d2 * self.d_a[j];
            h.set_column(j + 1, &next);
        }
        h
    }

    fn elec_and_slope(&self, j: usize, p_kw: f64) -> (f64, f64) {
        let k = self.cfg.slices_per_step();
        let slice_h = self.cfg.dt_pv_s / 3600.0;
        let w = self.prices[j] * slice_h;
        let mut val = 0.0;
        let mut slope = 0.0;
        for &pv in &self.pv[j * k..(j + 1) * k] {
            val += softplus(p_kw - pv, self.cfg.beta);
            slope += softplus_deriv(p_kw - pv, self.cfg.beta);
        }
        (w * val, w * slope)
    }

    fn objective_and_grad(&self, z: &DVector<f64>, mu: f64) -> (f64, DVector<f64>) {
        let n = self.model.n_states();
        let m = self.model.n_pumps();
        let (h0, u) = self.split(z);
        let h = self.rollout(&h0, &u);

        let mut obj = 0.0;
        let mut slopes = vec![0.0; self.n_steps];
        for j in 0..self.n_steps {
            let hj = h.column(j).clone_owned();
            let uj = u.column(j).clone_owned();
            obj += barrier_cost(&hj, self.shrunk, &self.cfg.barrier_a, &self.cfg.barrier_b);
            let p = mpc_power_kw(self.model, &hj, &uj);
            let (val, slope) = self.elec_and_slope(j, p);
            obj += val;
            slopes[j] = slope;
        }

        let gap = h.column(self.n_steps) - &h0;
        obj += mu * gap.dot(&gap);
        let mut lambda: DVector<f64> = &gap * (2.0 * mu);

        let mut grad_u = DMatrix::zeros(m, self.n_steps);
        for j in (0..self.n_steps).rev() {
            let hj = h.column(j).clone_owned();
            let uj = u.column(j).clone_owned();
            let (dp_dh, dp_du) = mpc_power_grads(self.model, &hj, &uj);
            grad_u.set_column(j, &(dp_du * slopes[j] + self.model.b_d1.transpose() * &lambda));
            lambda = barrier_grad(&hj, self.shrunk, &self.cfg.barrier_a, &self.cfg.barrier_b)
                + dp_dh * slopes[j]
                + self.model.a_d.transpose() * lambda;
        }
        let grad_h0 = lambda - gap * (2.0 * mu);

        let mut grad = DVector::zeros(n + m * self.n_steps);
        for i in 0..n {
            grad[i] = grad_h0[i];
        }
        grad.rows_mut(n, m * self.n_steps).copy_from_slice(grad_u.as_slice());
        (obj, grad)
    }
}

/// Computes the optimal periodic trajectory over the given average
/// daily profiles: `d_a_star` and `c_star` per control step,
/// `p_pv_star` per PV slice.
pub fn compute_periodic_trajectory(
    model: &LinearWdnModel,
    bounds: &TankBounds,
    cfg: &MpcConfig,
    d_a_star: &[f64],
    c_star: &[f64],
    p_pv_star: &[f64],
) -> Result<PeriodicTrajectory> {
    let n = model.n_states();
    let m = model.n_pumps();
    cfg.validate(n)?;
    if (model.dt_s - cfg.dt_s).abs() > 1e-9 {
        return Err(Error::Parameter(
            "model discretization does not match the control step".into(),
        ));
    }
    let n_steps = cfg.steps_per_day();
    if d_a_star.len() != n_steps || c_star.len() != n_steps {
        return Err(Error::Input(format!(
            "average profiles must cover the day: need {n_steps} steps"
        )));
    }
    if p_pv_star.len() != n_steps * cfg.slices_per_step() {
        return Err(Error::Input(format!(
            "average PV profile needs {} slices",
            n_steps * cfg.slices_per_step()
        )));
    }
    let shrunk = bounds.shrunk(&cfg.w_box)?;

    let problem = CycleProblem {
        model,
        shrunk: &shrunk,
        cfg,
        d_a: d_a_star,
        prices: c_star,
        pv: p_pv_star,
        n_steps,
    };

    let mut lo = DVector::zeros(n + m * n_steps);
    let mut hi = DVector::zeros(n + m * n_steps);
    for i in 0..n {
        lo[i] = shrunk.h_min[i];
        hi[i] = shrunk.h_max[i];
    }
    for j in 0..n_steps {
        for p in 0..m {
            lo[n + j * m + p] = 0.0;
            hi[n + j * m + p] = shrunk.u_max[p];
        }
    }
    let zbox = SolveBox::new(lo, hi)?;

    // Start from the box center with the constant flow that cancels the
    // mean demand drift, so the initial guess is periodic by construction.
    let d_mean = d_a_star.iter().sum::<f64>() / n_steps as f64;
    let rhs = -(&model.b_d2 * d_mean);
    let u_flat = model
        .b_d1
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Numerical(format!("drift-free start failed: {e}")))?;
    let mut z = DVector::zeros(n + m * n_steps);
    for i in 0..n {
        z[i] = 0.5 * (shrunk.h_min[i] + shrunk.h_max[i]);
    }
    for j in 0..n_steps {
        for p in 0..m {
            z[n + j * m + p] = u_flat[p].clamp(0.0, shrunk.u_max[p]);
        }
    }

    let mut mu = cfg.penalty_init;
    let mut gap = f64::INFINITY;
    for _ in 0..cfg.penalty_rounds {
        let out = projected_lbfgs(
            |w| problem.objective_and_grad(w, mu),
            &z,
            &zbox,
            cfg.max_iters,
            cfg.grad_tol,
        )?;
        z = out.x;
        let (h0, u) = problem.split(&z);
        gap = (problem.rollout(&h0, &u).column(n_steps) - &h0).norm();
        if gap < PERIODICITY_TOL {
            break;
        }
        mu *= cfg.penalty_growth;
    }
    if !(gap < PERIODICITY_TOL) {
        return Err(Error::Numerical(format!(
            "periodicity gap {gap} was not driven below {PERIODICITY_TOL}"
        )));
    }

    let (h0, u_star) = problem.split(&z);
    let h_star = problem.rollout(&h0, &u_star);
    for j in 0..=n_steps {
        let col = h_star.column(j);
        if !shrunk.contains(col.as_slice()) {
            return Err(Error::Numerical(format!(
                "periodic trajectory leaves the tightened level box at step {j}"
            )));
        }
    }

    Ok(PeriodicTrajectory {
        h_star,
        u_star,
        d_a_star: d_a_star.to_vec(),
        c_star: c_star.to_vec(),
        p_pv_star: p_pv_star.to_vec(),
    })
}
