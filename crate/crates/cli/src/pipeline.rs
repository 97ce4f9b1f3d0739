//! Plumbing shared by the subcommands: input series (read or
//! synthesized), network identification, and the PV fit behind
//! simulation runs.

use std::fs;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use solpump_core::empc::MpcConfig;
use solpump_core::io::{
    perturb_forecast, read_demand_csv, read_price_csv, read_weather_csv, synth_demand,
    synth_prices,
};
use solpump_core::pv::{
    fit_pv_model, generate_synthetic_series, sample_year, synth_weather, PvStochasticModel,
    SampledYear, WeatherSample,
};
use solpump_core::seed;
use solpump_core::wdn::{identify_linear_model, IdentReport, LinearWdnModel};

use crate::config::RunConfig;

/// Sizes below this count as no installation.
pub const X_ZERO_KW: f64 = 1e-9;

pub fn ensure_out_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory '{}'", dir.display()))
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path)
        .with_context(|| format!("cannot write '{}'", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("cannot read '{}'", path.display()))
}

/// The weather record behind production modeling: the configured CSV,
/// or `days` synthetic days from the run seed.
pub fn weather(cfg: &RunConfig, days: usize) -> anyhow::Result<Vec<WeatherSample>> {
    match &cfg.data.weather_csv {
        Some(path) => {
            let samples = read_weather_csv(open(path)?)?;
            if samples.len() % cfg.samples_per_day != 0 {
                anyhow::bail!(
                    "weather file '{}' holds {} samples, not a multiple of {} per day",
                    path.display(),
                    samples.len(),
                    cfg.samples_per_day
                );
            }
            if samples.len() >= 2 {
                let step = samples[1].timestamp - samples[0].timestamp;
                if step * cfg.samples_per_day as i64 != 86_400 {
                    anyhow::bail!(
                        "weather file '{}' is sampled every {step} s, which does not tile a day at {} samples",
                        path.display(),
                        cfg.samples_per_day
                    );
                }
            }
            Ok(samples)
        }
        None => Ok(synth_weather(
            seed::derive(cfg.seed, "synth-weather", 0),
            days,
            cfg.samples_per_day,
            &cfg.climate,
        )),
    }
}

/// Price, demand, and forecast series covering `need_days` days.
pub struct Feeds {
    pub prices: Vec<f64>,
    pub demand: Vec<f64>,
    pub forecast: Vec<f64>,
}

pub fn feeds(cfg: &RunConfig, need_days: usize, steps_per_day: usize) -> anyhow::Result<Feeds> {
    let need = need_days * steps_per_day;
    let prices = match &cfg.data.price_csv {
        Some(path) => {
            let v = read_price_csv(open(path)?)?;
            if v.len() < need {
                anyhow::bail!(
                    "price file '{}' covers {} steps, the run needs {need}",
                    path.display(),
                    v.len()
                );
            }
            v
        }
        None => synth_prices(cfg.seed, need_days, steps_per_day),
    };
    let demand = match &cfg.data.demand_csv {
        Some(path) => {
            let v = read_demand_csv(open(path)?)?;
            if v.len() < need {
                anyhow::bail!(
                    "demand file '{}' covers {} steps, the run needs {need}",
                    path.display(),
                    v.len()
                );
            }
            v
        }
        None => synth_demand(cfg.seed, need_days, steps_per_day, cfg.data.demand_mean_m3s),
    };
    let forecast = perturb_forecast(&demand, steps_per_day, cfg.seed, cfg.data.forecast_error_frac);
    Ok(Feeds { prices, demand, forecast })
}

/// Identifies the linear control model of the configured network.
pub fn identify(cfg: &RunConfig) -> anyhow::Result<(LinearWdnModel, IdentReport)> {
    let mut plan = cfg.ident.clone();
    plan.seed = seed::derive(cfg.seed, "ident", 0);
    let (model, report) = identify_linear_model(&cfg.network, &plan)?;
    Ok((model, report))
}

pub fn mpc_for(cfg: &RunConfig, report: &IdentReport) -> MpcConfig {
    cfg.mpc.build(cfg.network.n_states(), &report.w_box)
}

pub fn print_ident_report(report: &IdentReport) {
    let fmt = |v: &[f64], digits: usize| {
        v.iter().map(|x| format!("{x:.digits$}")).collect::<Vec<_>>().join(" ")
    };
    println!(
        "identified model from {} training samples: level R2 [{}], pressure R2 [{}]",
        report.n_train_samples,
        fmt(&report.r2_states, 4),
        fmt(&report.r2_pressures, 4)
    );
    println!(
        "one-step error box [{}] m over {} held-out pairs",
        fmt(&report.w_box, 1),
        report.n_holdout_pairs
    );
}

/// Fits the production model for `x_kw` installed kilowatts at the
/// lifetime-average efficiency and samples one year, the same path the
/// sizing oracle takes. `None` below the zero-size cutoff.
pub fn pv_year(
    cfg: &RunConfig,
    x_kw: f64,
) -> anyhow::Result<Option<(PvStochasticModel, SampledYear)>> {
    if x_kw < X_ZERO_KW {
        return Ok(None);
    }
    let weather = weather(cfg, cfg.synth_days)?;
    let lambda = cfg.sizing.proto().lambda_pv;
    let panel = cfg.panel.scaled_to(lambda * x_kw)?;
    let series = generate_synthetic_series(&weather, &panel, cfg.samples_per_day)?;
    let fit = fit_pv_model(&series, &cfg.fit_cfg)?;
    let mut rng = seed::rng(cfg.seed, "opex-year", 0);
    let year = sample_year(&fit.model, fit.init_state, &mut rng)?;
    Ok(Some((fit.model, year)))
}

/// Per-step means of an hourly series over the listed days.
pub fn day_means(series: &[f64], days: &[usize], steps: usize) -> Vec<f64> {
    let mut out = vec![0.0; steps];
    for &d in days {
        for (h, o) in out.iter_mut().enumerate() {
            *o += series[d * steps + h];
        }
    }
    for o in &mut out {
        *o /= days.len() as f64;
    }
    out
}

/// Per-slice means of the sampled PV year over the listed days.
pub fn pv_day_means(year: &SampledYear, days: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; year.samples_per_day];
    for &d in days {
        for (s, o) in out.iter_mut().enumerate() {
            *o += year.days[d].x[s];
        }
    }
    for o in &mut out {
        *o /= days.len() as f64;
    }
    out
}
