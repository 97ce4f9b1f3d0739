//! Sampling from the stochastic PV model.
//!
//! Two regimes: before sunrise nothing of the day has been seen, so the
//! daily multiplier comes from its ARMA prior and the correction chain is
//! drawn under a rejection rule that enforces the profile-energy
//! consistency identity. After sunrise the observed prefix of the day
//! updates the multiplier through a Bayes step on a discrete grid, with
//! the unobserved remainder of the day entering through a lognormal
//! approximation of the weighted correction sum.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::pv::physical::PvPowerSeries;
use crate::pv::stochastic::{DayState, LogArParams, PvStochasticModel};

fn norm_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (std::f64::consts::TAU).ln()
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// One multiplier draw with the state needed to continue the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierDraw {
    pub p: f64,
    pub eps: f64,
    pub zeta: f64,
}

/// Draws the day's multiplier from the ARMA prior given yesterday's
/// residual and innovation.
pub fn sample_multiplier<R: Rng>(
    model: &PvStochasticModel,
    state: &DayState,
    rng: &mut R,
) -> MultiplierDraw {
    let a = &model.arma;
    let zeta = a.sigma * rng.sample::<f64, _>(StandardNormal);
    let eps = a.mu + a.phi * state.eps_prev + a.theta * state.zeta_prev + zeta;
    let root = model.gamma.eval(state.day_index as f64) + eps;
    MultiplierDraw { p: root * root, eps, zeta }
}

/// Simulates the log-correction chain for `n` steps starting from the
/// given previous log value, returning correction factors.
fn continue_chain<R: Rng>(logar: &LogArParams, n: usize, mut prev: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let z = logar.sigma * rng.sample::<f64, _>(StandardNormal);
        let cur = logar.mu + logar.phi * prev + z;
        out.push(cur.exp());
        prev = cur;
    }
    out
}

/// Whether a full-day correction vector satisfies the profile-energy
/// consistency rule.
pub fn consistency_ok(profile: &[f64], delta: &[f64], tol_frac: f64) -> bool {
    let energy: f64 = profile.iter().map(|y| y * y).sum();
    let weighted: f64 = profile.iter().zip(delta).map(|(&y, &d)| y * y * d).sum();
    (weighted - energy).abs() < tol_frac * energy
}

fn assemble_day(state: &DayState, window: Vec<f64>) -> Vec<f64> {
    let mut delta = vec![1.0; state.profile.len()];
    delta[state.sunrise..=state.sundown].copy_from_slice(&window);
    delta
}

/// Draws a full day of corrections before anything of the day has been
/// observed. The chain starts at its stationary mean at sunrise and a
/// draw is accepted once the consistency rule holds; the attempt budget
/// comes from the model.
pub fn sample_corrections_presunrise<R: Rng>(
    model: &PvStochasticModel,
    state: &DayState,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = state.sundown - state.sunrise + 1;
    for _ in 0..model.max_attempts {
        let window = continue_chain(&model.logar, n, model.logar.stationary_mean(), rng);
        let delta = assemble_day(state, window);
        if consistency_ok(&state.profile, &delta, model.eps_tol_frac) {
            return Ok(delta);
        }
    }
    Err(Error::Sampling {
        attempts: model.max_attempts,
        context: format!(
            "no correction draw satisfied the consistency rule (day {})",
            state.day_index
        ),
    })
}

/// Last index at or before `i_c` (inside the daylight window) where both
/// the observed power and the profile are positive, together with the
/// log-correction there. Falls back to the stationary mean anchored at
/// `i_c` when no such index exists.
fn chain_anchor(
    state: &DayState,
    x_obs: &[f64],
    i_c: usize,
    p: f64,
    logar: &LogArParams,
) -> (usize, f64) {
    let hi = i_c.min(state.sundown);
    for i in (state.sunrise..=hi).rev() {
        if x_obs[i] > 0.0 && state.profile[i] > 0.0 {
            return (i, (x_obs[i] / (p * state.profile[i])).ln());
        }
    }
    (i_c, logar.stationary_mean())
}

/// Draws the rest of a day's corrections given the observed prefix
/// `x_obs[0..=i_c]` and a multiplier `p`, under the same consistency
/// rule applied to the whole day (observed part included).
pub fn sample_corrections_postsunrise<R: Rng>(
    model: &PvStochasticModel,
    state: &DayState,
    x_obs: &[f64],
    i_c: usize,
    p: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n_pv = state.profile.len();
    if x_obs.len() != i_c + 1 || i_c >= n_pv {
        return Err(Error::Input(format!(
            "observed prefix must cover exactly indices 0..=i_c; got {} values, i_c = {i_c}",
            x_obs.len()
        )));
    }
    if !(p > 0.0) {
        return Err(Error::Input(format!("multiplier must be positive, got {p}")));
    }
    if i_c < state.sunrise {
        return sample_corrections_presunrise(model, state, rng);
    }

    let mut fixed = vec![1.0; n_pv];
    for i in state.sunrise..=i_c.min(state.sundown) {
        if state.profile[i] > 0.0 {
            fixed[i] = x_obs[i] / (p * state.profile[i]);
        }
    }
    if i_c >= state.sundown {
        // Full daylight window observed: nothing left to draw.
        return if consistency_ok(&state.profile, &fixed, model.eps_tol_frac) {
            Ok(fixed)
        } else {
            Err(Error::Sampling {
                attempts: 0,
                context: "observed day violates the consistency rule for this multiplier".into(),
            })
        };
    }

    let (anchor, ln_prev) = chain_anchor(state, x_obs, i_c, p, &model.logar);
    let latent_gap = i_c - anchor;
    let n_rest = state.sundown - i_c;
    for _ in 0..model.max_attempts {
        let mut chain = continue_chain(&model.logar, latent_gap + n_rest, ln_prev, rng);
        let rest = chain.split_off(latent_gap);
        let mut delta = fixed.clone();
        delta[i_c + 1..=state.sundown].copy_from_slice(&rest);
        if consistency_ok(&state.profile, &delta, model.eps_tol_frac) {
            return Ok(delta);
        }
    }
    Err(Error::Sampling {
        attempts: model.max_attempts,
        context: format!(
            "no completion satisfied the consistency rule (day {}, i_c {i_c})",
            state.day_index
        ),
    })
}

/// Discrete posterior over the daily multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    /// Candidate multiplier values (cell centers).
    pub xs: Vec<f64>,
    /// Probability of each cell; sums to one.
    pub probs: Vec<f64>,
}

impl PosteriorGrid {
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        self.xs[best]
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (&x, &p) in self.xs.iter().zip(&self.probs) {
            acc += p;
            if u <= acc {
                return x;
            }
        }
        *self.xs.last().unwrap()
    }
}

/// Prior mean and spread of the multiplier residual for a given state.
fn prior_eps(model: &PvStochasticModel, state: &DayState) -> (f64, f64) {
    let a = &model.arma;
    (a.mu + a.phi * state.eps_prev + a.theta * state.zeta_prev, a.sigma)
}

fn log_prior_p(x: f64, gamma: f64, m_eps: f64, s_eps: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let s = x.sqrt();
    let branches = [
        norm_logpdf(s - gamma, m_eps, s_eps),
        norm_logpdf(-s - gamma, m_eps, s_eps),
    ];
    logsumexp(&branches) - (2.0 * s).ln()
}

/// Matched lognormal parameters for a weighted sum of correlated
/// lognormal terms, by a pairwise left fold: each partial sum of two
/// lognormals is replaced by a lognormal with the same first two
/// moments. `log_cov(i, j)` supplies the covariance of the log terms.
pub fn lognormal_sum(
    weights: &[f64],
    log_means: &[f64],
    log_vars: &[f64],
    log_cov: &dyn Fn(usize, usize) -> f64,
) -> Result<(f64, f64)> {
    let n = weights.len();
    if n == 0 || log_means.len() != n || log_vars.len() != n {
        return Err(Error::Input(format!(
            "lognormal sum needs equal non-empty term lists, got {n}, {}, {}",
            log_means.len(),
            log_vars.len()
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::Input("weights must be positive".into()));
    }
    if log_vars.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Input("log variances must be non-negative".into()));
    }
    let z: Vec<f64> = log_means
        .iter()
        .zip(weights)
        .map(|(&m, &w)| m + w.ln())
        .collect();
    // Work relative to the largest term to keep the exponentials tame.
    let shift = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut zm = z[0] - shift;
    let mut zv = log_vars[0];
    let mut cvec: Vec<f64> = (0..n).map(|j| log_cov(0, j)).collect();
    for j in 1..n {
        let (mj, vj) = (z[j] - shift, log_vars[j]);
        let c12 = cvec[j];
        let e1 = (zm + 0.5 * zv).exp();
        let e2 = (mj + 0.5 * vj).exp();
        let e = e1 + e2;
        let q = (2.0 * zm + 2.0 * zv).exp()
            + (2.0 * mj + 2.0 * vj).exp()
            + 2.0 * (zm + mj + 0.5 * (zv + vj) + c12).exp();
        let v_new = (q / (e * e)).ln().max(0.0);
        let m_new = e.ln() - 0.5 * v_new;
        for item in cvec.iter_mut().skip(j + 1) {
            // First-order propagation of log-covariances through the merge.
            *item = (e1 * *item) / e;
        }
        for k in (j + 1)..n {
            cvec[k] += (e2 * log_cov(j, k)) / e;
        }
        zm = m_new;
        zv = v_new;
    }
    Ok((zm + shift, zv))
}

/// Conditional moments of the log-correction chain `l` steps past a
/// known anchor value.
fn chain_moments(logar: &LogArParams, anchor_log: f64, l: u32) -> (f64, f64) {
    let phi_l = logar.phi.powi(l as i32);
    let mean = logar.stationary_mean() + phi_l * (anchor_log - logar.stationary_mean());
    let var = if logar.phi.abs() < 1.0 {
        logar.stationary_var() * (1.0 - phi_l * phi_l)
    } else {
        logar.sigma * logar.sigma * l as f64
    };
    (mean, var)
}

/// Bayes update of the daily multiplier from the observed prefix
/// `x_obs[0..=i_c]` of the day. With no daylight observed yet the result
/// is the prior restricted to the grid.
pub fn posterior_multiplier(
    model: &PvStochasticModel,
    state: &DayState,
    x_obs: &[f64],
    i_c: usize,
) -> Result<PosteriorGrid> {
    let n_pv = state.profile.len();
    if x_obs.len() != i_c + 1 || i_c >= n_pv {
        return Err(Error::Input(format!(
            "observed prefix must cover exactly indices 0..=i_c; got {} values, i_c = {i_c}",
            x_obs.len()
        )));
    }
    let (m_eps, s_eps) = prior_eps(model, state);
    if !(s_eps > 0.0) {
        return Err(Error::Parameter(
            "posterior update needs a positive multiplier noise scale".into(),
        ));
    }
    let gamma = model.gamma.eval(state.day_index as f64);
    let x_max = (gamma + 4.0 * s_eps).powi(2);
    if !(x_max > 0.0) {
        return Err(Error::Numerical(format!(
            "empty multiplier grid: gamma + 4 sigma = {}",
            gamma + 4.0 * s_eps
        )));
    }
    let k = model.posterior_grid;
    let xs: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) * x_max / k as f64).collect();

    let (sr, sd) = (state.sunrise, state.sundown);
    let y = &state.profile;
    let mut lp: Vec<f64> = xs.iter().map(|&x| log_prior_p(x, gamma, m_eps, s_eps)).collect();

    if i_c > sr {
        let hi = i_c.min(sd);
        let window_energy: f64 = (sr..=sd).map(|i| y[i] * y[i]).sum();
        let logar = &model.logar;
        let sigma_d = logar.sigma.max(1e-12);

        for (cell, x) in xs.iter().enumerate() {
            let mut acc = lp[cell];
            // Chain likelihood of the observed corrections.
            for i in (sr + 1)..=hi {
                let ok_cur = x_obs[i] > 0.0 && y[i] > 0.0;
                let ok_prev = x_obs[i - 1] > 0.0 && y[i - 1] > 0.0;
                if ok_cur && ok_prev {
                    let ln_cur = (x_obs[i] / (x * y[i])).ln();
                    let ln_prev = (x_obs[i - 1] / (x * y[i - 1])).ln();
                    let k_i = ln_cur - logar.mu - logar.phi * ln_prev;
                    acc += norm_logpdf(k_i, 0.0, sigma_d);
                }
            }
            // Tail: remaining weighted corrections must make up the gap
            // left by the observed part of the consistency identity.
            if hi < sd {
                let observed: f64 = (sr..=hi).map(|i| y[i] * x_obs[i] / x).sum();
                let target = window_energy - observed;
                if !(target > 0.0) {
                    acc = f64::NEG_INFINITY;
                } else {
                    let (anchor, ln_anchor) = chain_anchor(state, x_obs, i_c, *x, logar);
                    let mut w = Vec::new();
                    let mut lm = Vec::new();
                    let mut lv = Vec::new();
                    let mut lags = Vec::new();
                    for i in (i_c + 1)..=sd {
                        if y[i] > 0.0 {
                            let l = (i - anchor) as u32;
                            let (m, v) = chain_moments(logar, ln_anchor, l);
                            w.push(y[i] * y[i]);
                            lm.push(m);
                            lv.push(v);
                            lags.push(l);
                        }
                    }
                    if !w.is_empty() {
                        let logar_c = *logar;
                        let lags_c = lags.clone();
                        let lv_c = lv.clone();
                        let cov = move |i: usize, j: usize| -> f64 {
                            if i == j {
                                return lv_c[i];
                            }
                            let (a, b) = if lags_c[i] < lags_c[j] { (i, j) } else { (j, i) };
                            logar_c.phi.powi((lags_c[b] - lags_c[a]) as i32) * lv_c[a]
                        };
                        let (tm, tv) = lognormal_sum(&w, &lm, &lv, &cov)?;
                        let tv = tv.max(1e-18);
                        let lt = target.ln();
                        acc += norm_logpdf(lt, tm, tv.sqrt()) - lt;
                    }
                }
            }
            lp[cell] = acc;
        }
    }

    let norm = logsumexp(&lp);
    if norm == f64::NEG_INFINITY || !norm.is_finite() {
        return Err(Error::Numerical(
            "multiplier posterior vanished on the whole grid".into(),
        ));
    }
    let probs: Vec<f64> = lp.iter().map(|&v| (v - norm).exp()).collect();
    Ok(PosteriorGrid { xs, probs })
}

/// Draws `n_scenarios` completions of the current day without rejection:
/// the multiplier comes from its prior before sunrise and from the grid
/// posterior afterwards, and the correction chain continues from the
/// last observation. Returned vectors are full days whose first
/// `x_obs.len()` entries repeat the observations.
pub fn sample_scenarios_fast(
    model: &PvStochasticModel,
    state: &DayState,
    x_obs: &[f64],
    n_scenarios: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let n_pv = state.profile.len();
    if x_obs.len() > n_pv {
        return Err(Error::Input(format!(
            "observed prefix of {} values exceeds the day length {n_pv}",
            x_obs.len()
        )));
    }
    let i_c: isize = x_obs.len() as isize - 1;
    let (sr, sd) = (state.sunrise, state.sundown);
    let (m_eps, s_eps) = prior_eps(model, state);
    let gamma = model.gamma.eval(state.day_index as f64);

    let posterior = if s_eps > 0.0 && i_c >= sr as isize {
        Some(posterior_multiplier(model, state, x_obs, i_c as usize)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(n_scenarios);
    for _ in 0..n_scenarios {
        let p = if let Some(grid) = &posterior {
            grid.draw(rng)
        } else if s_eps > 0.0 {
            sample_multiplier(model, state, rng).p
        } else {
            let root = gamma + m_eps;
            root * root
        };

        let mut day = vec![0.0; n_pv];
        day[..x_obs.len()].copy_from_slice(x_obs);

        let mut delta = vec![1.0; n_pv];
        if i_c < sr as isize {
            let window = continue_chain(
                &model.logar,
                sd - sr + 1,
                model.logar.stationary_mean(),
                rng,
            );
            delta[sr..=sd].copy_from_slice(&window);
        } else if (i_c as usize) < sd {
            let ic = i_c as usize;
            let (anchor, ln_prev) = chain_anchor(state, x_obs, ic, p.max(1e-300), &model.logar);
            let latent_gap = ic - anchor;
            let mut chain =
                continue_chain(&model.logar, latent_gap + (sd - ic), ln_prev, rng);
            let rest = chain.split_off(latent_gap);
            delta[ic + 1..=sd].copy_from_slice(&rest);
        }

        for i in (i_c.max(-1) + 1) as usize..n_pv {
            day[i] = p * state.profile[i] * delta[i];
        }
        out.push(day);
    }
    Ok(out)
}

/// One sampled day with the state that generated it.
#[derive(Debug, Clone)]
pub struct DayRecord {
    /// State at the start of the day: its profile and the previous day's
    /// ARMA residual and innovation.
    pub state: DayState,
    pub p: f64,
    pub eps: f64,
    pub zeta: f64,
    /// The day's sampled power, kW.
    pub x: Vec<f64>,
}

/// A sequentially sampled stretch of days.
#[derive(Debug, Clone)]
pub struct SampledYear {
    pub samples_per_day: usize,
    pub days: Vec<DayRecord>,
}

impl SampledYear {
    pub fn series(&self) -> PvPowerSeries {
        let values: Vec<f64> = self.days.iter().flat_map(|d| d.x.iter().cloned()).collect();
        PvPowerSeries { samples_per_day: self.samples_per_day, values }
    }
}

/// Samples `n_days` consecutive days starting from the given state,
/// advancing the profile recursion with each sampled day.
pub fn sample_days(
    model: &PvStochasticModel,
    init: DayState,
    n_days: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampledYear> {
    model.validate()?;
    if init.profile.len() != model.samples_per_day {
        return Err(Error::Input(format!(
            "state profile length {} does not match the model's {}",
            init.profile.len(),
            model.samples_per_day
        )));
    }
    let mut state = init;
    let mut days = Vec::with_capacity(n_days);
    for _ in 0..n_days {
        let draw = sample_multiplier(model, &state, rng);
        let p = draw.p.max(0.0);
        let delta = sample_corrections_presunrise(model, &state, rng)?;
        let x: Vec<f64> = state
            .profile
            .iter()
            .zip(&delta)
            .map(|(&y, &d)| p * y * d)
            .collect();

        let g_today = model.g.eval(state.day_index as f64);
        if !(g_today > 0.0) {
            return Err(Error::Numerical(format!(
                "envelope non-positive at day {}",
                state.day_index
            )));
        }
        let next_profile =
            crate::pv::stochastic::update_profile(&state.profile, &x, g_today, model.alpha)?;
        let next_state = DayState::new(
            state.day_index + 1,
            next_profile,
            model.sunrise_threshold,
            draw.eps,
            draw.zeta,
        )
        .map_err(|_| {
            Error::Numerical(format!(
                "profile collapsed to zero after day {}",
                state.day_index
            ))
        })?;
        days.push(DayRecord { state, p, eps: draw.eps, zeta: draw.zeta, x });
        state = next_state;
    }
    Ok(SampledYear { samples_per_day: model.samples_per_day, days })
}

/// Samples one year.
pub fn sample_year(
    model: &PvStochasticModel,
    init: DayState,
    rng: &mut ChaCha8Rng,
) -> Result<SampledYear> {
    sample_days(model, init, 365, rng)
}
