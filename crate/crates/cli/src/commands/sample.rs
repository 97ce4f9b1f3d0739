//! `sample`: draw production scenarios from a fitted model.

use std::path::{Path, PathBuf};

use anyhow::Context;
use solpump_core::io::{read_model_file, write_scenarios_csv};
use solpump_core::pv::sample_days;
use solpump_core::seed;

use crate::config::RunConfig;
use crate::pipeline;

pub fn run(
    cfg: &RunConfig,
    out_dir: &Path,
    days: Option<usize>,
    scenarios: Option<usize>,
    model_path: Option<PathBuf>,
) -> anyhow::Result<()> {
    let days = days.unwrap_or(1);
    let n_scen = scenarios.unwrap_or(cfg.scenarios);
    if days == 0 || n_scen == 0 {
        anyhow::bail!("sample needs at least one day and one scenario");
    }
    let path = model_path.unwrap_or_else(|| out_dir.join("model.kv"));
    if !path.is_file() {
        anyhow::bail!("model file '{}' not found; run fit first", path.display());
    }
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("cannot read '{}'", path.display()))?;
    let (model, init) = read_model_file(&text)?;

    let mut fans = Vec::with_capacity(n_scen);
    for s in 0..n_scen {
        let mut rng = seed::rng(cfg.seed, "sample-scenario", s as u64);
        let year = sample_days(&model, init.clone(), days, &mut rng)?;
        fans.push(year.series().values);
    }

    pipeline::ensure_out_dir(out_dir)?;
    let out = out_dir.join("scenarios.csv");
    write_scenarios_csv(pipeline::create(&out)?, &fans)?;
    println!(
        "wrote {n_scen} scenarios of {days} days ({} samples each) to '{}'",
        days * model.samples_per_day,
        out.display()
    );
    Ok(())
}
