//! `fit`: fit the stochastic production model to a power series.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::Context;
use solpump_core::io::{read_power_csv, write_model_file};
use solpump_core::pv::{fit_pv_model, PvPowerSeries};

use crate::config::RunConfig;
use crate::pipeline;

pub fn run(cfg: &RunConfig, out_dir: &Path, power: Option<PathBuf>) -> anyhow::Result<()> {
    let path = power.unwrap_or_else(|| out_dir.join("power.csv"));
    if !path.is_file() {
        anyhow::bail!("power series '{}' not found; run synth first", path.display());
    }
    let file = File::open(&path).with_context(|| format!("cannot read '{}'", path.display()))?;
    let (_, values) = read_power_csv(file)?;
    let series = PvPowerSeries::new(cfg.samples_per_day, values)?;
    let n_days = series.n_days();
    let fit = fit_pv_model(&series, &cfg.fit_cfg)?;

    pipeline::ensure_out_dir(out_dir)?;
    let out = out_dir.join("model.kv");
    write_model_file(pipeline::create(&out)?, &fit.model, &fit.init_state)?;

    println!("fitted {n_days} days of production ({} correction pairs)", fit.correction_pairs);
    println!(
        "multiplier ARMA: mu = {:.4}, phi = {:.4}, theta = {:.4}, sigma = {:.4}",
        fit.model.arma.mu, fit.model.arma.phi, fit.model.arma.theta, fit.model.arma.sigma
    );
    println!(
        "log correction AR: mu = {:.4}, phi = {:.4}, sigma = {:.4}",
        fit.model.logar.mu, fit.model.logar.phi, fit.model.logar.sigma
    );
    println!("model written to '{}'", out.display());
    Ok(())
}
