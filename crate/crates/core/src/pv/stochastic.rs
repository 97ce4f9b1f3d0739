//! Stochastic model of daily PV production.
//!
//! A day of power is decomposed as `X = p · Y ⊙ δ`: a slowly adapting
//! intraday profile `Y` (exponentially weighted average of normalized
//! past days), a daily multiplier `p` for the overall weather level, and
//! intraday corrections `δ`. The multiplier's square root follows a
//! seasonal curve plus an ARMA(1,1) residual; the log-corrections follow
//! an AR(1) chain inside each day and are one at night.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::pv::physical::PvPowerSeries;

/// Period of the seasonal curves, days.
pub const SEASON_DAYS: f64 = 365.0;

/// Truncated Fourier series fitted by least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicFit {
    pub period: f64,
    /// Constant term.
    pub a0: f64,
    /// Cosine and sine coefficients for harmonics `1..=order`.
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
}

impl PeriodicFit {
    pub fn order(&self) -> usize {
        self.cos_coeffs.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let w = std::f64::consts::TAU / self.period;
        let mut v = self.a0;
        for k in 0..self.cos_coeffs.len() {
            let a = w * (k + 1) as f64 * x;
            v += self.cos_coeffs[k] * a.cos() + self.sin_coeffs[k] * a.sin();
        }
        v
    }

    /// A constant curve, used by degenerate fits and tests.
    pub fn constant(value: f64, period: f64) -> Self {
        Self { period, a0: value, cos_coeffs: vec![], sin_coeffs: vec![] }
    }
}

/// Fits a truncated Fourier series of the given order and period to the
/// points `(xs, ys)`.
pub fn fit_periodic(xs: &[f64], ys: &[f64], order: usize, period: f64) -> Result<PeriodicFit> {
    if xs.len() != ys.len() {
        return Err(Error::Input(format!(
            "periodic fit needs matching lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let ncols = 2 * order + 1;
    if xs.len() < ncols {
        return Err(Error::Input(format!(
            "periodic fit of order {order} needs at least {ncols} points, got {}",
            xs.len()
        )));
    }
    if !(period > 0.0) {
        return Err(Error::Parameter(format!("period must be positive, got {period}")));
    }
    if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("periodic fit input must be finite".into()));
    }
    let w = std::f64::consts::TAU / period;
    let a = DMatrix::from_fn(xs.len(), ncols, |r, c| {
        if c == 0 {
            1.0
        } else {
            let k = (c + 1) / 2;
            let arg = w * k as f64 * xs[r];
            if c % 2 == 1 {
                arg.cos()
            } else {
                arg.sin()
            }
        }
    });
    let coef = least_squares(a, DVector::from_column_slice(ys))?;
    let mut cos_coeffs = Vec::with_capacity(order);
    let mut sin_coeffs = Vec::with_capacity(order);
    for k in 0..order {
        cos_coeffs.push(coef[1 + 2 * k]);
        sin_coeffs.push(coef[2 + 2 * k]);
    }
    Ok(PeriodicFit { period, a0: coef[0], cos_coeffs, sin_coeffs })
}

/// ARMA(1,1) with intercept: `e_t = mu + phi e_{t-1} + theta z_{t-1} + z_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmaParams {
    pub mu: f64,
    pub phi: f64,
    pub theta: f64,
    pub sigma: f64,
}

/// AR(1) with intercept on log-corrections:
/// `ln d_i = mu + phi ln d_{i-1} + z_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogArParams {
    pub mu: f64,
    pub phi: f64,
    pub sigma: f64,
}

impl LogArParams {
    /// Stationary mean of the log-correction chain.
    pub fn stationary_mean(&self) -> f64 {
        self.mu / (1.0 - self.phi)
    }

    /// Stationary variance of the log-correction chain.
    pub fn stationary_var(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

/// Fitted stochastic model plus the sampler settings that belong to it.
#[derive(Debug, Clone, PartialEq)]
pub struct PvStochasticModel {
    pub samples_per_day: usize,
    /// Profile adaptation rate of the exponentially weighted average.
    pub alpha: f64,
    /// Fraction of the profile maximum that defines sunrise and sundown.
    pub sunrise_threshold: f64,
    /// Seasonal envelope of daily maxima, kW.
    pub g: PeriodicFit,
    /// Seasonal curve of the square-root multiplier.
    pub gamma: PeriodicFit,
    /// Day-to-day multiplier residual model.
    pub arma: ArmaParams,
    /// Intraday log-correction model.
    pub logar: LogArParams,
    /// Acceptance tolerance of the consistency rule, as a fraction of
    /// the profile energy.
    pub eps_tol_frac: f64,
    /// Attempt budget of the rejection samplers.
    pub max_attempts: usize,
    /// Number of cells of the posterior multiplier grid.
    pub posterior_grid: usize,
}

impl PvStochasticModel {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_day == 0 {
            return Err(Error::Parameter("samples_per_day must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.sunrise_threshold > 0.0 && self.sunrise_threshold < 1.0) {
            return Err(Error::Parameter(format!(
                "sunrise_threshold must lie in (0, 1), got {}",
                self.sunrise_threshold
            )));
        }
        if self.arma.phi.abs() >= 1.0 {
            return Err(Error::Parameter(format!(
                "multiplier AR coefficient must satisfy |phi| < 1, got {}",
                self.arma.phi
            )));
        }
        if self.logar.phi.abs() >= 1.0 {
            return Err(Error::Parameter(format!(
                "correction AR coefficient must satisfy |phi| < 1, got {}",
                self.logar.phi
            )));
        }
        if self.arma.sigma < 0.0 || self.logar.sigma < 0.0 {
            return Err(Error::Parameter("noise scales must be non-negative".into()));
        }
        if !(self.eps_tol_frac > 0.0) {
            return Err(Error::Parameter("eps_tol_frac must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Parameter("max_attempts must be positive".into()));
        }
        if self.posterior_grid < 2 {
            return Err(Error::Parameter("posterior_grid needs at least 2 cells".into()));
        }
        Ok(())
    }
}

/// Rolling state of the model at a given day: the day's profile and the
/// previous day's ARMA residual and innovation.
#[derive(Debug, Clone, PartialEq)]
pub struct DayState {
    /// Index of the day this state describes.
    pub day_index: u32,
    /// Intraday profile `Y` for this day.
    pub profile: Vec<f64>,
    /// First intraday index at or above the sunrise threshold.
    pub sunrise: usize,
    /// Last intraday index at or above the sunrise threshold.
    pub sundown: usize,
    /// ARMA residual of the previous day.
    pub eps_prev: f64,
    /// ARMA innovation of the previous day.
    pub zeta_prev: f64,
}

impl DayState {
    pub fn new(
        day_index: u32,
        profile: Vec<f64>,
        sunrise_threshold: f64,
        eps_prev: f64,
        zeta_prev: f64,
    ) -> Result<Self> {
        let (sunrise, sundown) = sunrise_sundown(&profile, sunrise_threshold)?;
        Ok(Self { day_index, profile, sunrise, sundown, eps_prev, zeta_prev })
    }

    /// Profile energy `sum Y_i^2`.
    pub fn profile_energy(&self) -> f64 {
        self.profile.iter().map(|y| y * y).sum()
    }
}

/// First and last index where the profile reaches `threshold` times its
/// maximum. Errors when the profile never becomes positive.
pub fn sunrise_sundown(profile: &[f64], threshold: f64) -> Result<(usize, usize)> {
    let max = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::Input("profile has no positive values".into()));
    }
    let cut = threshold * max;
    let sunrise = profile.iter().position(|&y| y >= cut).unwrap();
    let sundown = profile.iter().rposition(|&y| y >= cut).unwrap();
    Ok((sunrise, sundown))
}

/// One step of the profile recursion:
/// `Y_next = alpha * X_prev / g_prev + (1 - alpha) * Y_prev`.
pub fn update_profile(
    profile_prev: &[f64],
    x_prev: &[f64],
    g_prev: f64,
    alpha: f64,
) -> Result<Vec<f64>> {
    if profile_prev.len() != x_prev.len() {
        return Err(Error::Input(format!(
            "profile and power lengths differ: {} vs {}",
            profile_prev.len(),
            x_prev.len()
        )));
    }
    if !(g_prev > 0.0) {
        return Err(Error::Input(format!(
            "envelope value must be positive, got {g_prev}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(profile_prev
        .iter()
        .zip(x_prev)
        .map(|(&y, &x)| alpha * x / g_prev + (1.0 - alpha) * y)
        .collect())
}

/// Least-squares daily multiplier `p = sum(Y X) / sum(Y^2)`.
pub fn optimal_multiplier(profile: &[f64], x: &[f64]) -> Result<f64> {
    if profile.len() != x.len() {
        return Err(Error::Input(format!(
            "profile and power lengths differ: {} vs {}",
            profile.len(),
            x.len()
        )));
    }
    let denom: f64 = profile.iter().map(|y| y * y).sum();
    if !(denom > 0.0) {
        return Err(Error::Input("profile energy is zero, multiplier undefined".into()));
    }
    let numer: f64 = profile.iter().zip(x).map(|(&y, &x)| y * x).sum();
    Ok(numer / denom)
}

/// Correction terms `d_i = X_i / (p Y_i)` wherever the profile is
/// positive, and one where it vanishes (night).
pub fn correction_terms(profile: &[f64], x: &[f64], p: f64) -> Result<Vec<f64>> {
    if profile.len() != x.len() {
        return Err(Error::Input(format!(
            "profile and power lengths differ: {} vs {}",
            profile.len(),
            x.len()
        )));
    }
    if !(p > 0.0) {
        return Err(Error::Input(format!("multiplier must be positive, got {p}")));
    }
    Ok(profile
        .iter()
        .zip(x)
        .map(|(&y, &x)| if y > 0.0 { x / (p * y) } else { 1.0 })
        .collect())
}

/// Fits the ARMA(1,1) multiplier-residual model by two-stage regression:
/// a long autoregression estimates the innovations, then the ARMA
/// coefficients come from a joint regression on the lagged residual and
/// lagged innovation.
pub fn fit_multiplier_model(eps: &[f64], long_ar_order: Option<usize>) -> Result<ArmaParams> {
    let n = eps.len();
    if n < 365 {
        return Err(Error::Input(format!(
            "multiplier fit needs at least 365 residuals, got {n}"
        )));
    }
    if eps.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("multiplier residuals must be finite".into()));
    }
    let p_long = long_ar_order.unwrap_or_else(|| (n / 10).clamp(5, 20));

    // Stage one: long AR with intercept, innovations from its residuals.
    let rows = n - p_long;
    let a = DMatrix::from_fn(rows, p_long + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            eps[p_long + r - c]
        }
    });
    let b = DVector::from_fn(rows, |r, _| eps[p_long + r]);
    let coef = least_squares(a.clone(), b.clone())?;
    let resid = b - a * &coef;
    // innovations[t] approximates z_{p_long + t}
    let innovations: Vec<f64> = resid.iter().cloned().collect();

    // Stage two: regress e_t on [1, e_{t-1}, z_{t-1}].
    let rows2 = rows - 1;
    let a2 = DMatrix::from_fn(rows2, 3, |r, c| match c {
        0 => 1.0,
        1 => eps[p_long + r],
        _ => innovations[r],
    });
    let b2 = DVector::from_fn(rows2, |r, _| eps[p_long + r + 1]);
    let coef2 = least_squares(a2.clone(), b2.clone())?;
    let (mu, phi, theta) = (coef2[0], coef2[1], coef2[2]);
    if !phi.is_finite() || phi.abs() >= 1.0 {
        return Err(Error::Fit(format!(
            "multiplier model is non-stationary: phi = {phi}"
        )));
    }
    let resid2 = b2 - a2 * &coef2;
    let dof = rows2.saturating_sub(3).max(1);
    let sigma = (resid2.iter().map(|v| v * v).sum::<f64>() / dof as f64).sqrt();
    Ok(ArmaParams { mu, phi, theta, sigma })
}

/// Fits the AR(1) log-correction model from consecutive in-day pairs
/// `(ln d_{i-1}, ln d_i)`.
pub fn fit_correction_model(pairs: &[(f64, f64)]) -> Result<LogArParams> {
    if pairs.is_empty() {
        return Err(Error::Input("correction fit needs at least one pair".into()));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::Input("correction pairs must be finite".into()));
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let var_x = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum::<f64>() / n;
    if var_x < 1e-16 {
        // Constant predictor: the chain carries no usable autocorrelation
        // signal. Fall back to an uncorrelated model around the mean.
        let mu = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let var_y = pairs.iter().map(|p| (p.1 - mu).powi(2)).sum::<f64>() / n;
        return Ok(LogArParams { mu, phi: 0.0, sigma: var_y.sqrt() });
    }
    let a = DMatrix::from_fn(pairs.len(), 2, |r, c| if c == 0 { 1.0 } else { pairs[r].0 });
    let b = DVector::from_fn(pairs.len(), |r, _| pairs[r].1);
    let coef = least_squares(a.clone(), b.clone())?;
    let (mu, phi) = (coef[0], coef[1]);
    if !phi.is_finite() || phi.abs() >= 1.0 {
        return Err(Error::Fit(format!(
            "correction model is non-stationary: phi = {phi}"
        )));
    }
    let resid = b - a * &coef;
    let dof = pairs.len().saturating_sub(2).max(1);
    let sigma = (resid.iter().map(|v| v * v).sum::<f64>() / dof as f64).sqrt();
    Ok(LogArParams { mu, phi, sigma })
}

/// Configuration of [`fit_pv_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticFitConfig {
    pub alpha: f64,
    pub fourier_order: usize,
    pub sunrise_threshold: f64,
    pub long_ar_order: Option<usize>,
    pub eps_tol_frac: f64,
    pub max_attempts: usize,
    pub posterior_grid: usize,
}

impl Default for StochasticFitConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            fourier_order: 2,
            sunrise_threshold: 0.01,
            long_ar_order: None,
            eps_tol_frac: 0.01,
            max_attempts: 10_000,
            posterior_grid: 200,
        }
    }
}

/// Result of fitting the full stochastic model to a power series.
#[derive(Debug, Clone)]
pub struct PvFitResult {
    pub model: PvStochasticModel,
    /// State ready for sampling the day after the dataset ends: its
    /// profile is the one from a year earlier, per the yearly sampling
    /// convention.
    pub init_state: DayState,
    /// Daily multipliers actually used in the fit (day 1 onward).
    pub multipliers: Vec<f64>,
    /// Multiplier residuals fed to the ARMA fit.
    pub epsilons: Vec<f64>,
    /// Number of log-correction pairs used.
    pub correction_pairs: usize,
}

/// Fits envelope, profile, multiplier, and correction models to a power
/// series covering at least 366 whole days.
pub fn fit_pv_model(series: &PvPowerSeries, cfg: &StochasticFitConfig) -> Result<PvFitResult> {
    let n_days = series.n_days();
    let n_pv = series.samples_per_day;
    if n_days < 366 {
        return Err(Error::Input(format!(
            "stochastic fit needs at least 366 days, got {n_days}"
        )));
    }
    if series.values.iter().any(|&v| v < 0.0) {
        return Err(Error::Input("power values must be non-negative".into()));
    }

    // Seasonal envelope of daily maxima.
    let day_idx: Vec<f64> = (0..n_days).map(|d| d as f64).collect();
    let daily_max: Vec<f64> = (0..n_days)
        .map(|d| series.day(d).iter().cloned().fold(0.0_f64, f64::max))
        .collect();
    let g = fit_periodic(&day_idx, &daily_max, cfg.fourier_order, SEASON_DAYS)?;
    for d in 0..n_days {
        if !(g.eval(d as f64) > 0.0) {
            return Err(Error::Fit(format!(
                "fitted envelope is non-positive at day {d}; data too sparse for order {}",
                cfg.fourier_order
            )));
        }
    }

    // Roll the profile recursion, collecting multipliers and corrections.
    // Day zero only initializes the profile: its multiplier is determined
    // by construction and carries no information.
    let first = series.day(0);
    if !first.iter().any(|&x| x > 0.0) {
        return Err(Error::Fit("first day of the series has no production".into()));
    }
    let g0 = g.eval(0.0);
    let mut profile: Vec<f64> = first.iter().map(|&x| x / g0).collect();
    let mut profiles_by_day: Vec<Vec<f64>> = Vec::with_capacity(n_days);
    profiles_by_day.push(profile.clone());

    let mut mult_days: Vec<f64> = Vec::with_capacity(n_days - 1);
    let mut multipliers: Vec<f64> = Vec::with_capacity(n_days - 1);
    let mut delta_pairs: Vec<(f64, f64)> = Vec::new();

    for d in 1..n_days {
        profile = update_profile(&profile, series.day(d - 1), g.eval((d - 1) as f64), cfg.alpha)?;
        profiles_by_day.push(profile.clone());
        let x = series.day(d);
        let energy: f64 = profile.iter().map(|y| y * y).sum();
        if energy <= 0.0 {
            continue;
        }
        let p = optimal_multiplier(&profile, x)?;
        if p <= 0.0 {
            continue;
        }
        mult_days.push(d as f64);
        multipliers.push(p);

        let delta = correction_terms(&profile, x, p)?;
        let (sr, sd) = match sunrise_sundown(&profile, cfg.sunrise_threshold) {
            Ok(v) => v,
            Err(_) => continue,
        };
        for i in (sr + 1)..=sd {
            if delta[i] > 0.0 && delta[i - 1] > 0.0 {
                delta_pairs.push((delta[i - 1].ln(), delta[i].ln()));
            }
        }
    }

    if multipliers.len() < 365 {
        return Err(Error::Fit(format!(
            "only {} usable multiplier days; at least 365 required",
            multipliers.len()
        )));
    }

    // Seasonal curve of sqrt(p) and its ARMA residual model.
    let sqrt_p: Vec<f64> = multipliers.iter().map(|p| p.sqrt()).collect();
    let gamma = fit_periodic(&mult_days, &sqrt_p, cfg.fourier_order, SEASON_DAYS)?;
    let eps: Vec<f64> = mult_days
        .iter()
        .zip(&sqrt_p)
        .map(|(&d, &s)| s - gamma.eval(d))
        .collect();
    let arma = fit_multiplier_model(&eps, cfg.long_ar_order)?;

    let logar = fit_correction_model(&delta_pairs)?;

    let model = PvStochasticModel {
        samples_per_day: n_pv,
        alpha: cfg.alpha,
        sunrise_threshold: cfg.sunrise_threshold,
        g,
        gamma,
        arma,
        logar,
        eps_tol_frac: cfg.eps_tol_frac,
        max_attempts: cfg.max_attempts,
        posterior_grid: cfg.posterior_grid,
    };
    model.validate()?;

    // Reconstruct the ARMA innovation path to carry state forward.
    let mut zeta_prev = 0.0;
    let mut eps_prev = eps[0];
    for t in 1..eps.len() {
        let zeta = eps[t] - arma.mu - arma.phi * eps[t - 1] - arma.theta * zeta_prev;
        zeta_prev = zeta;
        eps_prev = eps[t];
    }

    let year_back = &profiles_by_day[n_days - 365];
    let init_state = DayState::new(
        n_days as u32,
        year_back.clone(),
        cfg.sunrise_threshold,
        eps_prev,
        zeta_prev,
    )?;

    Ok(PvFitResult {
        model,
        init_state,
        multipliers,
        epsilons: eps,
        correction_pairs: delta_pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn periodic_fit_recovers_a_constant() {
        let xs: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let ys = vec![3.25; 400];
        let f = fit_periodic(&xs, &ys, 2, SEASON_DAYS).unwrap();
        for &x in &[0.0, 100.0, 400.0] {
            assert_relative_eq!(f.eval(x), 3.25, max_relative = 1e-9);
        }
    }

    #[test]
    fn periodic_fit_recovers_a_cosine() {
        let xs: Vec<f64> = (0..730).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 2.0 + 0.7 * (std::f64::consts::TAU * x / SEASON_DAYS).cos())
            .collect();
        let f = fit_periodic(&xs, &ys, 2, SEASON_DAYS).unwrap();
        for &x in &[0.0, 91.25, 182.5, 300.0] {
            let expect = 2.0 + 0.7 * (std::f64::consts::TAU * x / SEASON_DAYS).cos();
            assert_relative_eq!(f.eval(x), expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn periodic_fit_residuals_are_orthogonal_to_the_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|_| rng.gen::<f64>()).collect();
        let f = fit_periodic(&xs, &ys, 2, SEASON_DAYS).unwrap();
        let resid: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| y - f.eval(x)).collect();
        let dot_const: f64 = resid.iter().sum();
        assert!(dot_const.abs() < 1e-8, "constant component not removed: {dot_const}");
        let w = std::f64::consts::TAU / SEASON_DAYS;
        for k in 1..=2 {
            let dc: f64 = xs.iter().zip(&resid).map(|(&x, &r)| r * (w * k as f64 * x).cos()).sum();
            let ds: f64 = xs.iter().zip(&resid).map(|(&x, &r)| r * (w * k as f64 * x).sin()).sum();
            assert!(dc.abs() < 1e-8 && ds.abs() < 1e-8);
        }
    }

    #[test]
    fn periodic_fit_rejects_short_input() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 2.0, 3.0];
        assert!(fit_periodic(&xs, &ys, 2, SEASON_DAYS).is_err());
    }

    #[test]
    fn profile_update_limits() {
        let y = [0.5, 1.0];
        let x = [2.0, 4.0];
        // alpha = 1 forgets the old profile entirely.
        assert_eq!(update_profile(&y, &x, 2.0, 1.0).unwrap(), vec![1.0, 2.0]);
        // alpha = 0 keeps it unchanged.
        assert_eq!(update_profile(&y, &x, 2.0, 0.0).unwrap(), vec![0.5, 1.0]);
        // interior alpha mixes.
        let mid = update_profile(&y, &x, 2.0, 0.5).unwrap();
        assert_eq!(mid, vec![0.75, 1.5]);
    }

    #[test]
    fn profile_update_rejects_bad_envelope() {
        assert!(update_profile(&[1.0], &[1.0], 0.0, 0.5).is_err());
        assert!(update_profile(&[1.0], &[1.0], -1.0, 0.5).is_err());
    }

    #[test]
    fn multiplier_of_scaled_profile_is_the_scale() {
        let y = [0.1, 0.5, 1.0, 0.4];
        let x: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        assert_relative_eq!(optimal_multiplier(&y, &x).unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn multiplier_matches_grid_search() {
        // The closed form must agree with a brute-force minimizer of
        // sum (X - p Y)^2 over a fine grid.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = 24;
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let x: Vec<f64> = y
                .iter()
                .map(|&v| (3.0 * rng.gen::<f64>()) * v + 0.1 * rng.gen::<f64>())
                .collect();
            let p_closed = optimal_multiplier(&y, &x).unwrap();
            let sse = |p: f64| -> f64 {
                y.iter().zip(&x).map(|(&y, &x)| (x - p * y) * (x - p * y)).sum()
            };
            let mut best = (f64::INFINITY, 0.0);
            let mut p = 0.0;
            while p <= 8.0 {
                let v = sse(p);
                if v < best.0 {
                    best = (v, p);
                }
                p += 1e-4;
            }
            assert!(
                (p_closed - best.1).abs() <= 1e-4 + 1e-9,
                "closed form {p_closed} vs grid {}",
                best.1
            );
        }
    }

    #[test]
    fn multiplier_requires_profile_energy() {
        assert!(optimal_multiplier(&[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn corrections_of_exact_multiple_are_one() {
        let y = [0.0, 0.2, 0.9, 0.3, 0.0];
        let x: Vec<f64> = y.iter().map(|v| 1.7 * v).collect();
        let d = correction_terms(&y, &x, 1.7).unwrap();
        for v in d {
            assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn corrections_satisfy_the_consistency_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let y: Vec<f64> = (0..96)
            .map(|i| if (20..=70).contains(&i) { rng.gen::<f64>() } else { 0.0 })
            .collect();
        let x: Vec<f64> = y
            .iter()
            .map(|&v| if v > 0.0 { v * (0.5 + rng.gen::<f64>()) } else { 0.0 })
            .collect();
        let p = optimal_multiplier(&y, &x).unwrap();
        let d = correction_terms(&y, &x, p).unwrap();
        let lhs: f64 = y.iter().zip(&d).map(|(&y, &d)| y * y * d).sum();
        let rhs: f64 = y.iter().map(|&y| y * y).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn hand_computed_correction() {
        let y = [1.0, 2.0];
        let x = [2.0, 2.0];
        let d = correction_terms(&y, &x, 2.0).unwrap();
        assert_eq!(d, vec![1.0, 0.5]);
    }

    fn simulate_arma(p: &ArmaParams, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut e_prev = p.mu / (1.0 - p.phi);
        let mut z_prev = 0.0;
        for _ in 0..(n + 200) {
            let z: f64 = p.sigma * rng.sample::<f64, _>(StandardNormal);
            let e = p.mu + p.phi * e_prev + p.theta * z_prev + z;
            out.push(e);
            e_prev = e;
            z_prev = z;
        }
        out.split_off(200)
    }

    #[test]
    fn arma_fit_recovers_simulated_coefficients() {
        let truth = ArmaParams { mu: 0.0, phi: 0.6, theta: 0.3, sigma: 0.1 };
        for seed in [1, 2] {
            let eps = simulate_arma(&truth, 3000, seed);
            let fitted = fit_multiplier_model(&eps, None).unwrap();
            assert!(
                (fitted.phi - truth.phi).abs() < 0.1,
                "seed {seed}: phi {} vs {}",
                fitted.phi,
                truth.phi
            );
            assert!(
                (fitted.theta - truth.theta).abs() < 0.1,
                "seed {seed}: theta {} vs {}",
                fitted.theta,
                truth.theta
            );
        }
    }

    #[test]
    fn arma_fit_on_white_noise_finds_no_structure() {
        // phi and theta are only identified jointly here: any phi with
        // theta = -phi is the same white-noise process. The first
        // autocovariance of the fitted process, proportional to
        // phi + theta for small coefficients, has to vanish.
        let truth = ArmaParams { mu: 0.0, phi: 0.0, theta: 0.0, sigma: 0.2 };
        let eps = simulate_arma(&truth, 4000, 17);
        let fitted = fit_multiplier_model(&eps, None).unwrap();
        assert!(
            (fitted.phi + fitted.theta).abs() < 0.1,
            "phi {} theta {}",
            fitted.phi,
            fitted.theta
        );
        assert_relative_eq!(fitted.sigma, 0.2, max_relative = 0.1);
    }

    #[test]
    fn arma_fit_needs_a_year() {
        assert!(fit_multiplier_model(&vec![0.0; 100], None).is_err());
    }

    #[test]
    fn correction_fit_recovers_simulated_chain() {
        let truth = LogArParams { mu: 0.01, phi: 0.8, sigma: 0.2 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pairs = Vec::new();
        let mut prev = truth.stationary_mean();
        for _ in 0..10_000 {
            let z: f64 = truth.sigma * rng.sample::<f64, _>(StandardNormal);
            let cur = truth.mu + truth.phi * prev + z;
            pairs.push((prev, cur));
            prev = cur;
        }
        let fitted = fit_correction_model(&pairs).unwrap();
        assert!((fitted.mu - truth.mu).abs() < 0.05, "mu {}", fitted.mu);
        assert!((fitted.phi - truth.phi).abs() < 0.05, "phi {}", fitted.phi);
        assert!((fitted.sigma - truth.sigma).abs() < 0.05, "sigma {}", fitted.sigma);
    }

    #[test]
    fn correction_fit_of_constant_ones_is_degenerate() {
        let pairs = vec![(0.0, 0.0); 50];
        let fitted = fit_correction_model(&pairs).unwrap();
        assert_eq!(fitted.mu, 0.0);
        assert_eq!(fitted.phi, 0.0);
        assert_eq!(fitted.sigma, 0.0);
    }

    #[test]
    fn correction_fit_residual_mean_is_zero() {
        let truth = LogArParams { mu: -0.02, phi: 0.5, sigma: 0.15 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pairs = Vec::new();
        let mut prev = 0.0;
        for _ in 0..5000 {
            let z: f64 = truth.sigma * rng.sample::<f64, _>(StandardNormal);
            let cur = truth.mu + truth.phi * prev + z;
            pairs.push((prev, cur));
            prev = cur;
        }
        let fitted = fit_correction_model(&pairs).unwrap();
        let mean_resid: f64 = pairs
            .iter()
            .map(|&(a, b)| b - fitted.mu - fitted.phi * a)
            .sum::<f64>()
            / pairs.len() as f64;
        assert!(mean_resid.abs() < 1e-8, "residual mean {mean_resid}");
    }

    #[test]
    fn sunrise_sundown_brackets_the_daylight_window() {
        let mut y = vec![0.0; 96];
        for i in 30..=60 {
            y[i] = 1.0 - ((i as f64 - 45.0) / 20.0).powi(2);
        }
        let (sr, sd) = sunrise_sundown(&y, 0.01).unwrap();
        assert_eq!((sr, sd), (30, 60));
        assert!(sunrise_sundown(&vec![0.0; 96], 0.01).is_err());
    }
}
