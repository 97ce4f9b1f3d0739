//! Exponential surrogate for the simulated grid cost.
//!
//! The yearly grid bill as a function of installed PV power is noisy
//! (every point is one sampled year) but follows a saturating decay:
//! each extra kilowatt displaces less grid energy than the last. A
//! three-parameter exponential `c(x) = a exp(-b x) + c0` captures that
//! shape, and the smoothed total cost built on it can be minimized for
//! several lifespans without re-running the simulator.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct ExpFit {
    pub a: f64,
    pub b: f64,
    pub c0: f64,
}

impl ExpFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * (-self.b * x).exp() + self.c0
    }
}

/// Least-squares fit of `a exp(-b x) + c0` to the points `(xs, ys)`.
///
/// A log-linear regression on `ln(y - c0)` seeds a Gauss-Newton
/// refinement with step halving. Constant data short-circuits to
/// `a = 0, b = 0, c0 = mean`.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> Result<ExpFit> {
    if xs.len() != ys.len() {
        return Err(Error::Input("xs and ys must have equal length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Input("need at least three points".into()));
    }
    for w in 0..xs.len() {
        for v in (w + 1)..xs.len() {
            if xs[w] == xs[v] {
                return Err(Error::Input(format!("duplicate abscissa {}", xs[w])));
            }
        }
    }
    if ys.iter().any(|y| !y.is_finite()) || xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("points must be finite".into()));
    }

    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = y_max - y_min;
    let scale = ys.iter().fold(1.0_f64, |m, y| m.max(y.abs()));
    if span <= 1e-9 * scale {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        return Ok(ExpFit { a: 0.0, b: 0.0, c0: mean });
    }

    // Offset the floor below the smallest sample so every shifted value
    // stays positive for the logarithm.
    let c0_init = y_min - 0.1 * span;
    let n = xs.len();
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let ly = (ys[i] - c0_init).ln();
        sx += xs[i];
        sy += ly;
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ly;
    }
    let nf = n as f64;
    let denom = nf * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::Numerical("degenerate abscissas".into()));
    }
    let slope = (nf * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / nf;
    let mut a = intercept.exp();
    let mut b = -slope;
    let mut c0 = c0_init;

    let sse = |a: f64, b: f64, c0: f64| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let r = a * (-b * x).exp() + c0 - y;
                r * r
            })
            .sum()
    };
    let mut best = sse(a, b, c0);
    for _ in 0..100 {
        let mut jtj = DMatrix::<f64>::zeros(3, 3);
        let mut jtr = DVector::<f64>::zeros(3);
        for (&x, &y) in xs.iter().zip(ys) {
            let e = (-b * x).exp();
            let r = a * e + c0 - y;
            let row = [e, -a * x * e, 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    jtj[(i, j)] += row[i] * row[j];
                }
                jtr[i] += row[i] * r;
            }
        }
        let step = match jtj.clone().lu().solve(&(-&jtr)) {
            Some(s) => s,
            None => break,
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (ta, tb, tc) = (a + alpha * step[0], b + alpha * step[1], c0 + alpha * step[2]);
            let trial = sse(ta, tb, tc);
            if trial.is_finite() && trial < best {
                a = ta;
                b = tb;
                c0 = tc;
                let drop = best - trial;
                best = trial;
                accepted = true;
                if drop <= 1e-14 * (1.0 + best) {
                    return Ok(ExpFit { a, b, c0 });
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite() && c0.is_finite()) {
        return Err(Error::Numerical("exponential fit diverged".into()));
    }
    Ok(ExpFit { a, b, c0 })
}

/// Minimizer over `[0, x_max]` of the smoothed lifetime cost
/// `a_ins * 1000 * x + lifespan * (a_m * x + c(x))`
/// by golden-section search.
pub fn smoothed_argmin(
    fit: &ExpFit,
    x_max: f64,
    a_ins_eur_per_w: f64,
    a_m_eur_per_kw_yr: f64,
    lifespan_yr: f64,
) -> f64 {
    let g = |x: f64| {
        a_ins_eur_per_w * 1000.0 * x + lifespan_yr * (a_m_eur_per_kw_yr * x + fit.eval(x))
    };
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, x_max);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..200 {
        if hi - lo < 1e-8 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = g(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The endpoints can undercut the interior when the cost is monotone.
    let candidates = [0.0, mid, x_max];
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if g(c) < g(best) {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_data_is_recovered() {
        let truth = ExpFit { a: 1000.0, b: 0.01, c0: 50_000.0 };
        let xs: Vec<f64> = (0..9).map(|i| 50.0 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| truth.eval(x)).collect();
        let fit = fit_exponential(&xs, &ys).unwrap();
        assert!((fit.a - truth.a).abs() / truth.a < 1e-6, "a = {}", fit.a);
        assert!((fit.b - truth.b).abs() / truth.b < 1e-6, "b = {}", fit.b);
        assert!((fit.c0 - truth.c0).abs() / truth.c0 < 1e-6, "c0 = {}", fit.c0);
    }

    #[test]
    fn constant_data_fits_flat() {
        let xs = [0.0, 100.0, 200.0, 300.0];
        let ys = [42.0, 42.0, 42.0, 42.0];
        let fit = fit_exponential(&xs, &ys).unwrap();
        assert_eq!(fit.a, 0.0);
        assert_eq!(fit.b, 0.0);
        assert!((fit.c0 - 42.0).abs() < 1e-12);
        assert_eq!(smoothed_argmin(&fit, 500.0, 2.0, 17.0, 25.0), 0.0);
    }

    #[test]
    fn argmin_matches_the_stationarity_condition() {
        let fit = ExpFit { a: 200_000.0, b: 0.01, c0: 50_000.0 };
        let (a_ins, a_m, l) = (2.0, 17.0, 25.0);
        // a b exp(-b x) = a_ins 1000 / l + a_m at the interior optimum.
        let x_star = -((a_ins * 1000.0 / l + a_m) / (fit.a * fit.b)).ln() / fit.b;
        let got = smoothed_argmin(&fit, 500.0, a_ins, a_m, l);
        assert!((got - x_star).abs() < 1e-5, "got {got}, expected {x_star}");
        assert!(got > 0.0 && got < 500.0);
    }

    #[test]
    fn longer_lifespans_move_the_optimum_up() {
        let fit = ExpFit { a: 150_000.0, b: 0.008, c0: 60_000.0 };
        let x25 = smoothed_argmin(&fit, 600.0, 2.0, 17.0, 25.0);
        let x30 = smoothed_argmin(&fit, 600.0, 2.0, 17.0, 30.0);
        let x35 = smoothed_argmin(&fit, 600.0, 2.0, 17.0, 35.0);
        assert!(x25 > 0.0);
        assert!(x30 >= x25 && x35 >= x30, "{x25} {x30} {x35}");
    }

    #[test]
    fn short_or_mismatched_inputs_are_rejected() {
        assert!(fit_exponential(&[0.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(fit_exponential(&[0.0, 1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_exponential(&[0.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
