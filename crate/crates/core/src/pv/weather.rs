//! Synthetic weather generation.
//!
//! Produces irradiance, temperature and wind series with a northern
//! European character: a seasonal clear-sky envelope with short winter
//! days, persistent stochastic cloudiness, and mild seasonal temperature
//! and wind cycles. Everything is driven by one seeded generator, so a
//! given seed always yields the same series.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::physical::WeatherSample;

/// Day of year (0-based) around which days are longest and irradiance
/// peaks.
const SUMMER_PEAK_DAY: f64 = 172.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ClimateParams {
    /// Mean clear-sky noon irradiance over the year, W/m².
    pub noon_mean_wm2: f64,
    /// Seasonal swing of clear-sky noon irradiance, W/m².
    pub noon_amp_wm2: f64,
    /// Mean day length over the year, hours.
    pub daylight_mean_h: f64,
    /// Seasonal swing of day length, hours.
    pub daylight_amp_h: f64,
    /// Sharpening exponent applied to the intraday irradiance shape.
    pub shape_exponent: f64,
    /// Mean clearness (1 = clear sky) over the year.
    pub cloud_mean: f64,
    /// Seasonal swing of mean clearness.
    pub cloud_amp: f64,
    /// Lag-one correlation of the cloud process between samples.
    pub cloud_rho: f64,
    /// Stationary standard deviation of the cloud process.
    pub cloud_sigma: f64,
    /// Lower clamp on clearness.
    pub cloud_floor: f64,
    /// When set, clearness is forced to one and the output follows the
    /// clear-sky envelope exactly.
    pub clear_sky: bool,
    /// Mean air temperature over the year, °C.
    pub temp_mean_c: f64,
    /// Seasonal temperature swing, °C.
    pub temp_amp_c: f64,
    /// Day-night temperature swing, °C.
    pub temp_diurnal_c: f64,
    /// Stationary standard deviation of the temperature noise, °C.
    pub temp_sigma_c: f64,
    /// Mean wind speed, m/s.
    pub wind_mean_ms: f64,
    /// Seasonal wind swing (strongest in winter), m/s.
    pub wind_amp_ms: f64,
    /// Stationary standard deviation of the wind noise, m/s.
    pub wind_sigma_ms: f64,
}

impl Default for ClimateParams {
    fn default() -> Self {
        Self {
            noon_mean_wm2: 560.0,
            noon_amp_wm2: 360.0,
            daylight_mean_h: 12.2,
            daylight_amp_h: 5.0,
            shape_exponent: 1.3,
            cloud_mean: 0.54,
            cloud_amp: 0.20,
            cloud_rho: 0.98,
            cloud_sigma: 0.33,
            cloud_floor: 0.03,
            clear_sky: false,
            temp_mean_c: 8.5,
            temp_amp_c: 8.0,
            temp_diurnal_c: 4.0,
            temp_sigma_c: 1.6,
            wind_mean_ms: 5.5,
            wind_amp_ms: 1.5,
            wind_sigma_ms: 1.8,
        }
    }
}

fn seasonal(day_of_year: f64, mean: f64, amp: f64) -> f64 {
    mean + amp * (std::f64::consts::TAU * (day_of_year - SUMMER_PEAK_DAY) / 365.0).cos()
}

/// Clear-sky irradiance at a given day of year and hour of day, W/m².
pub fn clear_sky_irradiance(day_of_year: f64, hour: f64, climate: &ClimateParams) -> f64 {
    let daylight = seasonal(day_of_year, climate.daylight_mean_h, climate.daylight_amp_h);
    let from_noon = hour - 12.0;
    if from_noon.abs() >= daylight / 2.0 {
        return 0.0;
    }
    let elevation = (std::f64::consts::PI * from_noon / daylight).cos();
    let noon = seasonal(day_of_year, climate.noon_mean_wm2, climate.noon_amp_wm2);
    noon * elevation.powf(climate.shape_exponent)
}

/// Generates `days` whole days of weather at `samples_per_day` samples
/// each. Timestamps start at zero and step by `86400 / samples_per_day`
/// seconds; day zero is the first of January.
pub fn synth_weather(
    seed: u64,
    days: usize,
    samples_per_day: usize,
    climate: &ClimateParams,
) -> Vec<WeatherSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step_s = 86400 / samples_per_day as i64;
    let step_h = 24.0 / samples_per_day as f64;
    let innov = |rho: f64, sigma: f64, rng: &mut ChaCha8Rng| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * (1.0 - rho * rho).sqrt() * z
    };

    // Latent AR(1) states for cloudiness, temperature, and wind, started
    // at their stationary distributions.
    let mut zc: f64 = climate.cloud_sigma * rng.sample::<f64, _>(StandardNormal);
    let mut zt: f64 = climate.temp_sigma_c * rng.sample::<f64, _>(StandardNormal);
    let mut zw: f64 = climate.wind_sigma_ms * rng.sample::<f64, _>(StandardNormal);
    let rho_t = 0.995;
    let rho_w = 0.99;

    let mut out = Vec::with_capacity(days * samples_per_day);
    for day in 0..days {
        let doy = (day % 365) as f64;
        for i in 0..samples_per_day {
            let hour = (i as f64 + 0.5) * step_h;
            zc = climate.cloud_rho * zc + innov(climate.cloud_rho, climate.cloud_sigma, &mut rng);
            zt = rho_t * zt + innov(rho_t, climate.temp_sigma_c, &mut rng);
            zw = rho_w * zw + innov(rho_w, climate.wind_sigma_ms, &mut rng);

            let clearness = if climate.clear_sky {
                1.0
            } else {
                (seasonal(doy, climate.cloud_mean, climate.cloud_amp) + zc)
                    .clamp(climate.cloud_floor, 1.0)
            };
            let irradiance = clear_sky_irradiance(doy, hour, climate) * clearness;

            let diurnal = climate.temp_diurnal_c
                * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin()
                / 2.0;
            let temp = seasonal(doy, climate.temp_mean_c, climate.temp_amp_c) + diurnal + zt;

            // Winter is windier: flip the seasonal phase by negating.
            let wind = (seasonal(doy, climate.wind_mean_ms, -climate.wind_amp_ms) + zw).max(0.3);

            out.push(WeatherSample {
                timestamp: (day * samples_per_day + i) as i64 * step_s,
                irradiance,
                ambient_temp: temp,
                wind_speed: wind,
            });
        }
    }
    out
}
