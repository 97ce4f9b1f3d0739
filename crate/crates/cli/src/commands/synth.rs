//! `synth`: generate the synthetic input files.

use std::path::Path;

use solpump_core::io::{
    perturb_forecast, synth_demand, synth_prices, write_demand_csv, write_power_csv,
    write_price_csv, write_weather_csv,
};
use solpump_core::pv::{generate_synthetic_series, synth_weather};
use solpump_core::seed;

use crate::config::RunConfig;
use crate::pipeline;

pub fn run(cfg: &RunConfig, out_dir: &Path, days: Option<usize>) -> anyhow::Result<()> {
    let days = days.unwrap_or(cfg.synth_days);
    if days == 0 {
        anyhow::bail!("synth needs at least one day");
    }
    pipeline::ensure_out_dir(out_dir)?;

    let weather = synth_weather(
        seed::derive(cfg.seed, "synth-weather", 0),
        days,
        cfg.samples_per_day,
        &cfg.climate,
    );
    let series = generate_synthetic_series(&weather, &cfg.panel, cfg.samples_per_day)?;
    let timestamps: Vec<i64> = weather.iter().map(|s| s.timestamp).collect();
    write_weather_csv(pipeline::create(&out_dir.join("weather.csv"))?, &weather)?;
    write_power_csv(pipeline::create(&out_dir.join("power.csv"))?, &timestamps, &series.values)?;

    let steps = (86_400.0 / cfg.mpc.dt_s).round() as usize;
    let prices = synth_prices(cfg.seed, 365, steps);
    let demand = synth_demand(cfg.seed, 365, steps, cfg.data.demand_mean_m3s);
    let forecast = perturb_forecast(&demand, steps, cfg.seed, cfg.data.forecast_error_frac);
    write_price_csv(pipeline::create(&out_dir.join("prices.csv"))?, &prices)?;
    write_demand_csv(pipeline::create(&out_dir.join("demand.csv"))?, &demand)?;
    write_demand_csv(pipeline::create(&out_dir.join("demand_forecast.csv"))?, &forecast)?;

    println!(
        "wrote {days} days of weather and production at {} samples per day to '{}'",
        cfg.samples_per_day,
        out_dir.display()
    );
    println!("wrote 365 days of prices and demand at {steps} steps per day");
    Ok(())
}
