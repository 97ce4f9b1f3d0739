//! Physical PV panel model.
//!
//! Power is a function of in-plane irradiance and module temperature with
//! six empirical constants `k1..k6`; module temperature follows from
//! ambient temperature, irradiance and wind speed through the two-term
//! heat-loss law. Constants are supplied by the caller (the shipped
//! configuration carries values for a crystalline-silicon module per kW
//! of rated power).

use crate::error::{Error, Result};

/// Irradiance at standard test conditions, W/m².
pub const G_STC_WM2: f64 = 1000.0;
/// Module temperature at standard test conditions, °C.
pub const T_STC_C: f64 = 25.0;
/// Irradiance below which the panel is treated as producing nothing, W/m².
/// The log terms in the power law diverge toward zero irradiance, so a
/// cutoff is needed; anything below one watt is night for our purposes.
pub const NIGHT_IRRADIANCE_WM2: f64 = 1.0;

/// One row of a weather series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherSample {
    /// Seconds since the start of the dataset's epoch.
    pub timestamp: i64,
    /// Global in-plane irradiance, W/m².
    pub irradiance: f64,
    /// Ambient air temperature, °C.
    pub ambient_temp: f64,
    /// Wind speed, m/s.
    pub wind_speed: f64,
}

/// Parameters of one installation: rated power plus the empirical
/// constants of the power and temperature laws.
///
/// `k1..k6` carry the same unit as `p_stc_kw`; scaling an installation
/// means scaling the rated power and all six constants together, which
/// [`PvPanelParams::scaled_to`] does.
#[derive(Debug, Clone, PartialEq)]
pub struct PvPanelParams {
    /// Rated power at standard test conditions, kW.
    pub p_stc_kw: f64,
    /// Power-law constants, kW.
    pub k: [f64; 6],
    /// Constant heat-loss coefficient, W/(m²·K).
    pub mu0: f64,
    /// Wind-dependent heat-loss coefficient, W·s/(m³·K).
    pub mu1: f64,
}

impl PvPanelParams {
    pub fn new(p_stc_kw: f64, k: [f64; 6], mu0: f64, mu1: f64) -> Result<Self> {
        let p = Self { p_stc_kw, k, mu0, mu1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p_stc_kw.is_finite() || self.p_stc_kw < 0.0 {
            return Err(Error::Parameter(format!(
                "p_stc_kw must be finite and non-negative, got {}",
                self.p_stc_kw
            )));
        }
        if self.k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("k1..k6 must be finite".into()));
        }
        if !(self.mu0 > 0.0) || !self.mu0.is_finite() {
            return Err(Error::Parameter(format!(
                "mu0 must be positive, got {}",
                self.mu0
            )));
        }
        if !self.mu1.is_finite() || self.mu1 < 0.0 {
            return Err(Error::Parameter(format!(
                "mu1 must be finite and non-negative, got {}",
                self.mu1
            )));
        }
        Ok(())
    }

    /// Same module technology at a different rated power: `p_stc_kw` and
    /// all six power constants scale by the same factor.
    pub fn scaled_to(&self, p_stc_kw: f64) -> Result<Self> {
        if !p_stc_kw.is_finite() || p_stc_kw < 0.0 {
            return Err(Error::Parameter(format!(
                "target p_stc_kw must be finite and non-negative, got {p_stc_kw}"
            )));
        }
        if self.p_stc_kw == 0.0 {
            return Err(Error::Parameter(
                "cannot rescale an installation rated at zero".into(),
            ));
        }
        let f = p_stc_kw / self.p_stc_kw;
        Ok(Self {
            p_stc_kw,
            k: self.k.map(|v| v * f),
            mu0: self.mu0,
            mu1: self.mu1,
        })
    }
}

/// Module temperature from ambient conditions, °C.
pub fn module_temperature(
    irradiance: f64,
    ambient_temp: f64,
    wind_speed: f64,
    params: &PvPanelParams,
) -> Result<f64> {
    let denom = params.mu0 + params.mu1 * wind_speed;
    if !(denom > 0.0) {
        return Err(Error::Parameter(format!(
            "heat-loss denominator mu0 + mu1*wind = {denom} must be positive"
        )));
    }
    Ok(ambient_temp + irradiance / denom)
}

/// Panel power at the given irradiance and module temperature, kW.
///
/// Below [`NIGHT_IRRADIANCE_WM2`] the output is exactly zero, and the
/// value is clamped at zero from below; at standard test conditions the
/// output equals the rated power exactly.
pub fn panel_power(irradiance: f64, module_temp: f64, params: &PvPanelParams) -> f64 {
    if irradiance < NIGHT_IRRADIANCE_WM2 {
        return 0.0;
    }
    let g = irradiance / G_STC_WM2;
    let lg = g.ln();
    let t = module_temp - T_STC_C;
    let [k1, k2, k3, k4, k5, k6] = params.k;
    let p = g * (params.p_stc_kw
        + k1 * lg
        + k2 * lg * lg
        + k3 * t
        + k4 * t * lg
        + k5 * t * lg * lg
        + k6 * t * t);
    p.max(0.0)
}

/// A power series sampled on a fixed intraday grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PvPowerSeries {
    /// Number of samples per day.
    pub samples_per_day: usize,
    /// Power values in kW, day after day.
    pub values: Vec<f64>,
}

impl PvPowerSeries {
    pub fn new(samples_per_day: usize, values: Vec<f64>) -> Result<Self> {
        if samples_per_day == 0 {
            return Err(Error::Input("samples_per_day must be positive".into()));
        }
        if values.is_empty() || values.len() % samples_per_day != 0 {
            return Err(Error::Input(format!(
                "series length {} is not a positive multiple of samples_per_day {}",
                values.len(),
                samples_per_day
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("power values must be finite".into()));
        }
        Ok(Self { samples_per_day, values })
    }

    pub fn n_days(&self) -> usize {
        self.values.len() / self.samples_per_day
    }

    /// Samples of day `d` (0-based).
    pub fn day(&self, d: usize) -> &[f64] {
        let n = self.samples_per_day;
        &self.values[d * n..(d + 1) * n]
    }
}

/// Runs the physical model over a weather series.
///
/// The series must cover whole days of `samples_per_day` equally spaced
/// samples with strictly increasing timestamps.
pub fn generate_synthetic_series(
    weather: &[WeatherSample],
    params: &PvPanelParams,
    samples_per_day: usize,
) -> Result<PvPowerSeries> {
    params.validate()?;
    if samples_per_day == 0 {
        return Err(Error::Input("samples_per_day must be positive".into()));
    }
    if weather.is_empty() || weather.len() % samples_per_day != 0 {
        return Err(Error::Input(format!(
            "weather length {} is not a positive multiple of samples_per_day {}",
            weather.len(),
            samples_per_day
        )));
    }
    if weather.len() > 1 {
        let step = weather[1].timestamp - weather[0].timestamp;
        if step <= 0 {
            return Err(Error::Input("timestamps must be strictly increasing".into()));
        }
        for w in weather.windows(2) {
            if w[1].timestamp - w[0].timestamp != step {
                return Err(Error::Input(format!(
                    "timestamps must be equally spaced; {} then {}",
                    w[0].timestamp, w[1].timestamp
                )));
            }
        }
    }
    for (i, w) in weather.iter().enumerate() {
        if !w.irradiance.is_finite() || w.irradiance < 0.0 {
            return Err(Error::Input(format!(
                "irradiance at row {i} must be finite and non-negative, got {}",
                w.irradiance
            )));
        }
        if !w.ambient_temp.is_finite() {
            return Err(Error::Input(format!("temperature at row {i} is not finite")));
        }
        if !w.wind_speed.is_finite() || w.wind_speed < 0.0 {
            return Err(Error::Input(format!(
                "wind speed at row {i} must be finite and non-negative, got {}",
                w.wind_speed
            )));
        }
    }
    let mut values = Vec::with_capacity(weather.len());
    for w in weather {
        let t_mod = module_temperature(w.irradiance, w.ambient_temp, w.wind_speed, params)?;
        values.push(panel_power(w.irradiance, t_mod, params));
    }
    PvPowerSeries::new(samples_per_day, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Crystalline-silicon constants per kW of rated power, as shipped in
    /// the default configuration.
    fn unit_params() -> PvPanelParams {
        PvPanelParams::new(
            1.0,
            [-0.017237, -0.040465, -0.004702, 0.000149, 0.000170, 0.000005],
            25.0,
            6.84,
        )
        .unwrap()
    }

    #[test]
    fn temperature_without_irradiance_is_ambient() {
        let p = unit_params();
        assert_eq!(module_temperature(0.0, 10.0, 3.0, &p).unwrap(), 10.0);
    }

    #[test]
    fn temperature_in_still_air() {
        let mut p = unit_params();
        p.mu1 = 0.0;
        assert_relative_eq!(
            module_temperature(1000.0, 25.0, 0.0, &p).unwrap(),
            25.0 + 1000.0 / 25.0
        );
    }

    #[test]
    fn temperature_with_wind_cooling() {
        let p = unit_params();
        let expect = 0.0 + 500.0 / (25.0 + 6.84 * 5.0);
        assert_relative_eq!(
            module_temperature(500.0, 0.0, 5.0, &p).unwrap(),
            expect,
            max_relative = 1e-12
        );
    }

    #[test]
    fn temperature_rejects_nonpositive_denominator() {
        let mut p = unit_params();
        p.mu0 = 1.0;
        // Validation elsewhere keeps wind non-negative; the denominator
        // guard must still hold on its own.
        assert!(module_temperature(500.0, 0.0, -1.0, &p).is_err());
    }

    #[test]
    fn stc_returns_rated_power_exactly() {
        for p_stc in [1.0, 7.5, 250.0] {
            let p = unit_params().scaled_to(p_stc).unwrap();
            assert_eq!(panel_power(G_STC_WM2, T_STC_C, &p), p_stc);
        }
    }

    #[test]
    fn night_is_exactly_zero() {
        let p = unit_params();
        assert_eq!(panel_power(0.0, 10.0, &p), 0.0);
        assert_eq!(panel_power(0.9999, 40.0, &p), 0.0);
    }

    #[test]
    fn power_is_continuous_at_the_night_cutoff() {
        let p = unit_params();
        assert!(panel_power(1e-6, 5.0, &p).abs() < 1e-3 * p.p_stc_kw);
        // Just above the cutoff the log terms keep the value tiny as well.
        assert!(panel_power(1.0, 5.0, &p) < 1e-3 * p.p_stc_kw);
    }

    #[test]
    fn power_matches_hand_evaluated_formula() {
        let p = unit_params();
        let g = 500.0;
        let t_mod = 35.0;
        // Independent evaluation of the same law, spelled out term by term.
        let gp = 0.5_f64;
        let lg = gp.ln();
        let tp = 10.0;
        let expect = gp
            * (1.0 - 0.017237 * lg - 0.040465 * lg * lg - 0.004702 * tp
                + 0.000149 * tp * lg
                + 0.000170 * tp * lg * lg
                + 0.000005 * tp * tp);
        assert_relative_eq!(panel_power(g, t_mod, &p), expect, max_relative = 1e-12);
    }

    #[test]
    fn power_is_clamped_at_zero() {
        // Large negative temperature coefficient pushed to an extreme
        // makes the raw polynomial negative; output must clamp.
        let p = PvPanelParams::new(1.0, [0.0, 0.0, -1.0, 0.0, 0.0, 0.0], 25.0, 6.84).unwrap();
        assert_eq!(panel_power(800.0, 80.0, &p), 0.0);
    }

    #[test]
    fn scaling_rated_power_scales_output_proportionally() {
        let p1 = unit_params();
        let p2 = p1.scaled_to(2.0).unwrap();
        for (g, t) in [(120.0, 5.0), (430.0, 18.0), (980.0, 42.0)] {
            assert_relative_eq!(
                panel_power(g, t, &p2),
                2.0 * panel_power(g, t, &p1),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn series_of_zero_irradiance_is_zero_power() {
        let w: Vec<WeatherSample> = (0..96)
            .map(|i| WeatherSample {
                timestamp: i as i64 * 900,
                irradiance: 0.0,
                ambient_temp: 5.0,
                wind_speed: 3.0,
            })
            .collect();
        let s = generate_synthetic_series(&w, &unit_params(), 96).unwrap();
        assert_eq!(s.n_days(), 1);
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ragged_series_is_rejected() {
        let w: Vec<WeatherSample> = (0..95)
            .map(|i| WeatherSample {
                timestamp: i as i64 * 900,
                irradiance: 100.0,
                ambient_temp: 5.0,
                wind_speed: 3.0,
            })
            .collect();
        assert!(matches!(
            generate_synthetic_series(&w, &unit_params(), 96),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn uneven_timestamps_are_rejected() {
        let mut w: Vec<WeatherSample> = (0..96)
            .map(|i| WeatherSample {
                timestamp: i as i64 * 900,
                irradiance: 100.0,
                ambient_temp: 5.0,
                wind_speed: 3.0,
            })
            .collect();
        w[50].timestamp += 1;
        assert!(generate_synthetic_series(&w, &unit_params(), 96).is_err());
    }

    #[test]
    fn single_sample_matches_direct_evaluation() {
        let p = unit_params();
        let w = [WeatherSample {
            timestamp: 0,
            irradiance: 640.0,
            ambient_temp: 12.0,
            wind_speed: 4.0,
        }];
        let s = generate_synthetic_series(&w, &p, 1).unwrap();
        let t_mod = module_temperature(640.0, 12.0, 4.0, &p).unwrap();
        assert_eq!(s.values[0], panel_power(640.0, t_mod, &p));
    }
}
