//! Photovoltaic production: physical panel model, stochastic day-profile
//! model, and scenario sampling.

pub mod physical;
pub mod sampling;
pub mod stochastic;
pub mod weather;

pub use physical::{
    generate_synthetic_series, module_temperature, panel_power, PvPanelParams, PvPowerSeries,
    WeatherSample,
};
pub use sampling::{
    sample_days, sample_multiplier, sample_scenarios_fast, sample_year, DayRecord, SampledYear,
};
pub use stochastic::{
    fit_pv_model, DayState, PvFitResult, PvStochasticModel, StochasticFitConfig,
};
pub use weather::{synth_weather, ClimateParams};
