//! Box-constrained quasi-Newton descent used by the MPC and the
//! periodic-trajectory computation.
//!
//! Limited-memory BFGS directions combined with projection onto the
//! box and a backtracking Armijo search along the projected path. The
//! convergence measure is the projected gradient: the distance between
//! the iterate and the projection of a unit gradient step.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};

const MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Elementwise bounds `lo <= x <= hi`.
#[derive(Debug, Clone)]
pub struct SolveBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl SolveBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Parameter("box bound lengths differ".into()));
        }
        if lo.iter().zip(hi.iter()).any(|(&l, &h)| !(l <= h)) {
            return Err(Error::Parameter("box has an empty side".into()));
        }
        Ok(SolveBox { lo, hi })
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| x[i].clamp(self.lo[i], self.hi[i]))
    }
}

/// Result of a solver run.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Whether the projected gradient reached the tolerance.
    pub converged: bool,
}

fn two_loop(
    grad: &DVector<f64>,
    memory: &VecDeque<(DVector<f64>, DVector<f64>, f64)>,
) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let alpha = rho * s.dot(&q);
        q -= y * alpha;
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = memory.back() {
        let scale = s.dot(y) / y.dot(y);
        q *= scale;
    }
    for ((s, y, rho), alpha) in memory.iter().zip(alphas.into_iter().rev()) {
        let beta = rho * y.dot(&q);
        q += s * (alpha - beta);
    }
    q
}

/// Minimizes `f_g` over the box starting from `x0`. The callback
/// returns the objective and its gradient; non-finite trial values are
/// rejected by the line search, but a non-finite start is an error.
pub fn projected_lbfgs<F>(
    mut f_g: F,
    x0: &DVector<f64>,
    bounds: &SolveBox,
    max_iters: usize,
    grad_tol: f64,
) -> Result<SolveOutcome>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    if x0.len() != bounds.lo.len() {
        return Err(Error::Input("start point does not match the box".into()));
    }
    let mut x = bounds.project(x0);
    let (mut f, mut g) = f_g(&x);
    if !f.is_finite() {
        return Err(Error::Numerical("objective is not finite at the start".into()));
    }

    let mut memory: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iters = 0;

    while iters < max_iters {
        let pg = &x - &bounds.project(&(&x - &g));
        if pg.amax() <= grad_tol {
            converged = true;
            break;
        }
        iters += 1;

        let mut dir = -two_loop(&g, &memory);
        if dir.dot(&g) >= 0.0 {
            dir = -g.clone();
        }
        if memory.is_empty() {
            // Steepest descent carries the gradient's scale, which can be
            // enormous next to a barrier cliff; a unit step keeps the line
            // search inside the representable range.
            let norm = dir.norm();
            if norm > 0.0 {
                dir /= norm;
            }
        }

        let mut accepted = false;
        let mut step = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let x_trial = bounds.project(&(&x + &dir * step));
            let delta = &x_trial - &x;
            if delta.amax() == 0.0 {
                break;
            }
            let (f_trial, g_trial) = f_g(&x_trial);
            if f_trial.is_finite() && f_trial <= f + ARMIJO_C1 * g.dot(&delta) {
                let s = delta;
                let yv = &g_trial - &g;
                let sy = s.dot(&yv);
                if sy > 1e-12 * s.norm() * yv.norm() {
                    if memory.len() == MEMORY {
                        memory.pop_front();
                    }
                    memory.push_back((s, yv, 1.0 / sy));
                } else {
                    // Negative curvature along the step: the stored
                    // model is wrong there, so age out the oldest pair
                    // instead of letting it go stale.
                    memory.pop_front();
                }
                x = x_trial;
                f = f_trial;
                g = g_trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }

        if !accepted {
            if memory.is_empty() {
                break;
            }
            // The quasi-Newton direction is exhausted; restart steepest.
            memory.clear();
        }
    }

    Ok(SolveOutcome { x, value: f, iterations: iters, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn wide_box(n: usize) -> SolveBox {
        SolveBox::new(
            DVector::from_element(n, -1e6),
            DVector::from_element(n, 1e6),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_bowl_reaches_its_center() {
        let c = DVector::from_column_slice(&[1.5, -2.0, 0.25]);
        let f = |x: &DVector<f64>| {
            let d = x - &c;
            (d.dot(&d), 2.0 * d)
        };
        let out = projected_lbfgs(f, &DVector::zeros(3), &wide_box(3), 100, 1e-10).unwrap();
        assert!(out.converged);
        assert!((out.x - c).amax() < 1e-8);
    }

    #[test]
    fn active_bound_is_found() {
        let c = DVector::from_column_slice(&[5.0, 0.2]);
        let f = |x: &DVector<f64>| {
            let d = x - &c;
            (d.dot(&d), 2.0 * d)
        };
        let bx = SolveBox::new(
            DVector::from_element(2, 0.0),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let out = projected_lbfgs(f, &DVector::from_element(2, 0.5), &bx, 100, 1e-10).unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.x[0], 1.0);
        assert_relative_eq!(out.x[1], 0.2, epsilon = 1e-8);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_column_slice(&[
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            (v, g)
        };
        let bx = SolveBox::new(
            DVector::from_element(2, -2.0),
            DVector::from_element(2, 2.0),
        )
        .unwrap();
        let out =
            projected_lbfgs(f, &DVector::from_column_slice(&[-1.2, 1.0]), &bx, 500, 1e-9).unwrap();
        assert!(out.converged, "iters {}", out.iterations);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |_: &DVector<f64>| (f64::INFINITY, DVector::zeros(1));
        let r = projected_lbfgs(f, &DVector::zeros(1), &wide_box(1), 10, 1e-8);
        assert!(r.is_err());
    }

    #[test]
    fn empty_box_side_is_rejected() {
        assert!(SolveBox::new(
            DVector::from_column_slice(&[1.0]),
            DVector::from_column_slice(&[0.0])
        )
        .is_err());
    }
}
