//! `size`: minimize lifetime cost over the installed PV amount.

use std::path::Path;

use solpump_core::io::{write_sizing_log_csv, write_sizing_summary};
use solpump_core::sizing::{run_sizing, strided_days, SizingStack};

use crate::config::RunConfig;
use crate::pipeline;

fn parse_lifespans(raw: &str) -> anyhow::Result<Vec<u32>> {
    let mut out = Vec::new();
    for tok in raw.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        out.push(
            tok.parse::<u32>()
                .map_err(|_| anyhow::anyhow!("cannot parse lifespan '{tok}'"))?,
        );
    }
    if out.is_empty() {
        anyhow::bail!("--lifespans names no lifespan");
    }
    Ok(out)
}

pub fn run(
    cfg: &RunConfig,
    out_dir: &Path,
    days: Option<usize>,
    lifespans: Option<String>,
    x0: Option<f64>,
) -> anyhow::Result<()> {
    let n_days = days.unwrap_or(cfg.days);
    let sim_days = strided_days(n_days)?;
    let lifespans = match lifespans {
        Some(raw) => parse_lifespans(&raw)?,
        None => cfg.sizing.lifespans.clone(),
    };
    let x0_kw = x0.unwrap_or(cfg.sizing.x0_kw);

    let (model, report) = pipeline::identify(cfg)?;
    pipeline::print_ident_report(&report);
    let mpc = pipeline::mpc_for(cfg, &report);
    let steps = mpc.steps_per_day();

    let weather = pipeline::weather(cfg, cfg.synth_days)?;
    let feeds = pipeline::feeds(cfg, 365, steps)?;
    let stack = SizingStack {
        weather: &weather,
        panel: &cfg.panel,
        samples_per_day: cfg.samples_per_day,
        fit_cfg: &cfg.fit_cfg,
        model: &model,
        bounds: &cfg.bounds,
        mpc: &mpc,
        prices: &feeds.prices,
        demand: &feeds.demand,
        demand_forecast: &feeds.forecast,
        days: &sim_days,
    };

    let mut proto = cfg.sizing.proto();
    proto.lifespan_yr = lifespans[0];
    proto.lambda_pv = 1.0 - proto.degradation_per_yr * lifespans[0] as f64 / 2.0;
    println!(
        "sizing over {n_days} simulated days per candidate, lifespans {:?}, start {x0_kw} kW",
        lifespans
    );
    let run = run_sizing(&proto, &lifespans, &stack, &cfg.sizing.nm, x0_kw, cfg.seed)?;

    pipeline::ensure_out_dir(out_dir)?;
    let log_path = out_dir.join("sizing_log.csv");
    write_sizing_log_csv(pipeline::create(&log_path)?, &run.evals)?;
    let summary_path = out_dir.join("sizing_summary.kv");
    write_sizing_summary(pipeline::create(&summary_path)?, &run)?;

    println!(
        "{} candidate sizes simulated, {} direct-search iterations{}",
        run.evals.len(),
        run.nm_iterations,
        if run.nm_converged { "" } else { " (budget hit)" }
    );
    let best = run.best();
    if let (Some(x), Some(f)) = (best.nm_x_kw, best.nm_total_eur) {
        println!(
            "search optimum at lifespan {} yr: x = {x:.1} kW, lifetime cost {f:.0} EUR",
            best.lifespan_yr
        );
    }
    for s in &run.summaries {
        println!(
            "lifespan {} yr: exponential-fit optimum x = {:.1} kW, lifetime cost {:.0} EUR",
            s.lifespan_yr, s.expfit_x_kw, s.expfit_total_eur
        );
    }
    println!("log written to '{}', summary to '{}'", log_path.display(), summary_path.display());
    Ok(())
}
