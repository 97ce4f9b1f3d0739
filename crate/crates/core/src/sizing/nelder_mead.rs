//! Derivative-free 1-D minimization for the noisy sizing objective.
//!
//! The standard Nelder-Mead moves (reflection 1, expansion 2,
//! contraction 0.5, shrink 0.5) reduce to a short case split on a
//! two-point simplex. Since the shrink and contraction coefficients
//! coincide, a failed contraction and a shrink produce the same point,
//! so the contraction candidate is always accepted. Negative
//! candidates are clamped to zero before evaluation, and every oracle
//! call is logged; repeated visits to the same point reuse the logged
//! value.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NmConfig {
    /// Offset of the second simplex vertex from the start.
    pub step: f64,
    /// Stop once the simplex spans less than this.
    pub tol_x: f64,
    /// Stop after this many oracle evaluations.
    pub max_evals: usize,
}

impl NmConfig {
    /// Default initialization for a start point: a quarter of the
    /// start, or 50 when starting from zero.
    pub fn for_start(x0: f64) -> Self {
        NmConfig {
            step: if x0 > 0.0 { 0.25 * x0 } else { 50.0 },
            tol_x: 0.5,
            max_evals: 60,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.tol_x > 0.0) {
            return Err(Error::Parameter("step and tol_x must be positive".into()));
        }
        if self.max_evals < 3 {
            return Err(Error::Parameter("need at least three evaluations".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NmOutcome {
    pub best_x: f64,
    pub best_f: f64,
    /// Every oracle call in order, `(x, f)`.
    pub evals: Vec<(f64, f64)>,
    pub iterations: usize,
    /// True when the simplex shrank below tolerance before the
    /// evaluation budget ran out.
    pub converged: bool,
}

/// Minimizes `f` over `x >= 0` starting from the simplex
/// `{x0, x0 + step}`.
pub fn nelder_mead_minimize<F>(mut f: F, x0: f64, cfg: &NmConfig) -> Result<NmOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    cfg.validate()?;
    if !(x0 >= 0.0) {
        return Err(Error::Input(format!("start {x0} must be nonnegative")));
    }

    let mut evals: Vec<(f64, f64)> = Vec::new();
    let eval = |x: f64, evals: &mut Vec<(f64, f64)>, f: &mut F| -> Result<f64> {
        let x = x.max(0.0);
        if let Some(&(_, v)) = evals.iter().find(|&&(px, _)| px == x) {
            return Ok(v);
        }
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "cost at x = {x} is not finite after {} evaluations",
                evals.len()
            )));
        }
        evals.push((x, v));
        Ok(v)
    };

    let mut b = x0;
    let mut w = (x0 + cfg.step).max(0.0);
    let mut fb = eval(b, &mut evals, &mut f)?;
    let mut fw = eval(w, &mut evals, &mut f)?;
    if fw < fb {
        std::mem::swap(&mut b, &mut w);
        std::mem::swap(&mut fb, &mut fw);
    }

    let mut iterations = 0;
    let mut converged = false;
    while evals.len() < cfg.max_evals {
        if (b - w).abs() < cfg.tol_x {
            converged = true;
            break;
        }
        iterations += 1;

        let xr = (2.0 * b - w).max(0.0);
        // A reflection folded onto the best vertex by the clamp carries
        // no information; fall through to the contraction.
        let mut contract = xr == b;
        if !contract {
            let fr = eval(xr, &mut evals, &mut f)?;
            if fr < fb {
                let xe = (3.0 * b - 2.0 * w).max(0.0);
                let fe = eval(xe, &mut evals, &mut f)?;
                if fe < fr {
                    w = xe;
                    fw = fe;
                } else {
                    w = xr;
                    fw = fr;
                }
            } else if fr < fw {
                w = xr;
                fw = fr;
            } else {
                contract = true;
            }
        }
        if contract {
            let xc = 0.5 * (b + w);
            let fc = eval(xc, &mut evals, &mut f)?;
            w = xc;
            fw = fc;
        }
        if fw < fb {
            std::mem::swap(&mut b, &mut w);
            std::mem::swap(&mut fb, &mut fw);
        }
        if b == w {
            // Both vertices clamped onto the same boundary point.
            converged = true;
            break;
        }
    }
    if !converged && (b - w).abs() < cfg.tol_x {
        converged = true;
    }

    Ok(NmOutcome { best_x: b, best_f: fb, evals, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_is_minimized_within_the_budget() {
        let cfg = NmConfig { step: 1.0, tol_x: 1e-3, max_evals: 50 };
        let out = nelder_mead_minimize(|x| Ok((x - 3.0) * (x - 3.0)), 0.0, &cfg).unwrap();
        assert!(out.converged);
        assert!((out.best_x - 3.0).abs() < 1e-3, "best {}", out.best_x);
        assert!(out.evals.len() <= 50);
    }

    #[test]
    fn boundary_optimum_is_reached_with_the_guard() {
        let cfg = NmConfig { step: 2.0, tol_x: 1e-6, max_evals: 100 };
        let out = nelder_mead_minimize(|x| Ok(x.abs()), 5.0, &cfg).unwrap();
        assert!(out.best_x.abs() < 1e-5, "best {}", out.best_x);
    }

    #[test]
    fn noise_leaves_the_minimizer_nearby() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = NmConfig { step: 1.0, tol_x: 1e-4, max_evals: 80 };
        let out = nelder_mead_minimize(
            |x| Ok((x - 3.0) * (x - 3.0) + rng.gen_range(-0.01..0.01)),
            0.0,
            &cfg,
        )
        .unwrap();
        assert!((out.best_x - 3.0).abs() < 0.2, "best {}", out.best_x);
    }

    #[test]
    fn non_finite_cost_is_an_error() {
        let cfg = NmConfig { step: 1.0, tol_x: 1e-3, max_evals: 50 };
        let r = nelder_mead_minimize(
            |x| Ok(if x < 0.5 { f64::NAN } else { x }),
            3.0,
            &cfg,
        );
        assert!(r.is_err(), "descent into the invalid region must surface");
    }

    #[test]
    fn every_evaluation_is_logged_once() {
        let cfg = NmConfig { step: 1.0, tol_x: 1e-3, max_evals: 50 };
        let out = nelder_mead_minimize(|x| Ok((x - 1.0) * (x - 1.0)), 0.0, &cfg).unwrap();
        for (i, (x, _)) in out.evals.iter().enumerate() {
            assert!(
                out.evals.iter().skip(i + 1).all(|&(y, _)| y != *x),
                "duplicate log entry at x = {x}"
            );
        }
    }
}
