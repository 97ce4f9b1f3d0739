//! `simulate`: run the controller in closed loop against the nonlinear
//! network.

use std::io::Write;
use std::path::Path;

use solpump_core::empc::{compute_periodic_trajectory, run_closed_loop, PvFeed, TruthPlant};
use solpump_core::io::{ledger_json, write_trace_csv};

use crate::config::RunConfig;
use crate::pipeline;

pub fn run(cfg: &RunConfig, out_dir: &Path, days: Option<usize>, pv_kw: f64) -> anyhow::Result<()> {
    let n_days = days.unwrap_or(cfg.days);
    if n_days == 0 || n_days > 365 {
        anyhow::bail!("simulate needs between 1 and 365 days, got {n_days}");
    }
    if !(pv_kw >= 0.0) {
        anyhow::bail!("--pv-kw must be nonnegative, got {pv_kw}");
    }
    let window: Vec<usize> = (0..n_days).collect();

    let (model, report) = pipeline::identify(cfg)?;
    pipeline::print_ident_report(&report);
    let mpc = pipeline::mpc_for(cfg, &report);
    let steps = mpc.steps_per_day();
    let slices = mpc.slices_per_step();

    let feeds = pipeline::feeds(cfg, n_days, steps)?;
    let pv = pipeline::pv_year(cfg, pv_kw)?;
    let pv_feed = match &pv {
        None => PvFeed::None,
        Some((m, year)) => PvFeed::Stochastic { model: m, year },
    };
    let d_star = pipeline::day_means(&feeds.demand, &window, steps);
    let c_star = pipeline::day_means(&feeds.prices, &window, steps);
    let pv_star = match &pv {
        None => vec![0.0; steps * slices],
        Some((_, year)) => pipeline::pv_day_means(year, &window),
    };
    let periodic =
        compute_periodic_trajectory(&model, &cfg.bounds, &mpc, &d_star, &c_star, &pv_star)?;

    let h0 = periodic.h_star.column(0);
    let levels: Vec<f64> = cfg.network.tanks.iter().map(|t| h0[t.state_group]).collect();
    let mut plant = TruthPlant::new(cfg.network.clone())?;
    plant.set_levels(&levels)?;

    let out = run_closed_loop(
        &mut plant,
        &model,
        &cfg.bounds,
        &mpc,
        &periodic,
        &pv_feed,
        &window,
        &feeds.prices,
        &feeds.demand,
        &feeds.forecast,
        cfg.seed,
    )?;

    pipeline::ensure_out_dir(out_dir)?;
    let trace_path = out_dir.join("trace.csv");
    write_trace_csv(pipeline::create(&trace_path)?, &out.trace)?;
    let maintenance_eur = if pv_kw < pipeline::X_ZERO_KW {
        0.0
    } else {
        cfg.sizing.a_m_eur_per_kw_yr * pv_kw * n_days as f64 / 365.0
    };
    let ledger_path = out_dir.join("ledger.json");
    let mut w = pipeline::create(&ledger_path)?;
    w.write_all(ledger_json(&out.ledger, maintenance_eur).as_bytes())?;
    w.flush()?;

    println!(
        "simulated {n_days} days at {pv_kw} kW installed: grid cost {:.2} EUR, maintenance {:.2} EUR",
        out.ledger.grid_cost_eur, maintenance_eur
    );
    println!(
        "{} solves, {} infeasible steps, {} level violations",
        out.ledger.solves, out.ledger.infeasible_steps, out.ledger.violation_steps
    );
    println!("trace written to '{}', ledger to '{}'", trace_path.display(), ledger_path.display());
    Ok(())
}
