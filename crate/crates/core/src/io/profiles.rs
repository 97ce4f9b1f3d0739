//! Synthetic electricity prices, water demand, and demand forecasts.
//!
//! Prices follow a day-ahead pattern: a morning and an evening peak,
//! cheaper weekends, a seasonal level, and a slow random walk of the
//! daily level. Demand follows the classic double-hump household curve
//! with a weekend shift and mild day-to-day variation. The forecast is
//! the demand warped by a smooth low-order harmonic perturbation, so
//! the controller plans against slightly wrong but realistic numbers.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seed;

fn diurnal(hour: f64, morning: f64, evening: f64, width: f64) -> f64 {
    let bump = |center: f64| {
        let mut d = (hour - center).abs();
        d = d.min(24.0 - d);
        (-0.5 * (d / width).powi(2)).exp()
    };
    morning * bump(8.0) + evening * bump(19.0)
}

/// Hourly electricity prices for `days` days, EUR/kWh.
pub fn synth_prices(seed_value: u64, days: usize, steps_per_day: usize) -> Vec<f64> {
    let mut rng: ChaCha8Rng = seed::rng(seed_value, "synth-prices", 0);
    let mut level = 0.0_f64;
    let mut out = Vec::with_capacity(days * steps_per_day);
    for day in 0..days {
        level = 0.9 * level + rng.gen_range(-0.02..0.02);
        let weekend = day % 7 >= 5;
        let season = 0.05 * (TAU * (day % 365) as f64 / 365.0).cos();
        for i in 0..steps_per_day {
            let hour = (i as f64 + 0.5) * 24.0 / steps_per_day as f64;
            let mut p = 0.22 + season + level + diurnal(hour, 0.16, 0.21, 2.4);
            if weekend {
                p -= 0.05;
            }
            p += rng.gen_range(-0.01..0.01);
            out.push(p.max(0.01));
        }
    }
    out
}

/// Hourly aggregate water demand for `days` days, m³/s, with mean
/// close to `mean_m3s`.
pub fn synth_demand(
    seed_value: u64,
    days: usize,
    steps_per_day: usize,
    mean_m3s: f64,
) -> Vec<f64> {
    let mut rng: ChaCha8Rng = seed::rng(seed_value, "synth-demand", 0);
    let mut level = 0.0_f64;
    let mut out = Vec::with_capacity(days * steps_per_day);
    for day in 0..days {
        level = 0.8 * level + rng.gen_range(-0.015..0.015);
        let weekend = day % 7 >= 5;
        for i in 0..steps_per_day {
            let hour = (i as f64 + 0.5) * 24.0 / steps_per_day as f64;
            // Shift the morning hump late on weekends.
            let shape = if weekend {
                0.62 + diurnal(hour - 1.5, 0.55, 0.50, 2.8)
            } else {
                0.62 + diurnal(hour, 0.60, 0.48, 2.6)
            };
            out.push(mean_m3s * (shape + level).max(0.05));
        }
    }
    out
}

/// Smoothly perturbed copy of `demand`: each value is scaled by
/// `1 + e(hour)` where `e` is a three-harmonic daily curve with random
/// phases and total amplitude at most `max_frac`.
pub fn perturb_forecast(
    demand: &[f64],
    steps_per_day: usize,
    seed_value: u64,
    max_frac: f64,
) -> Vec<f64> {
    let mut rng: ChaCha8Rng = seed::rng(seed_value, "demand-forecast", 0);
    let weights = [0.5, 0.3, 0.2];
    let phases: Vec<f64> = (0..weights.len()).map(|_| rng.gen_range(0.0..TAU)).collect();
    demand
        .iter()
        .enumerate()
        .map(|(t, &d)| {
            let hour = (t % steps_per_day) as f64 * 24.0 / steps_per_day as f64;
            let e: f64 = weights
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(k, (wk, ph))| wk * (TAU * (k as f64 + 1.0) * hour / 24.0 + ph).cos())
                .sum();
            d * (1.0 + max_frac * e)
        })
        .collect()
}
