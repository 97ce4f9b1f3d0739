//! `periodic`: the periodic daily reference of the controller.

use std::io::Write;
use std::path::Path;

use solpump_core::empc::compute_periodic_trajectory;

use crate::config::RunConfig;
use crate::pipeline;

pub fn run(cfg: &RunConfig, out_dir: &Path, days: Option<usize>, pv_kw: f64) -> anyhow::Result<()> {
    let n_days = days.unwrap_or(cfg.days);
    if n_days == 0 || n_days > 365 {
        anyhow::bail!("periodic needs between 1 and 365 days to average over, got {n_days}");
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
    let d_star = pipeline::day_means(&feeds.demand, &window, steps);
    let c_star = pipeline::day_means(&feeds.prices, &window, steps);
    let pv = pipeline::pv_year(cfg, pv_kw)?;
    let pv_star = match &pv {
        None => vec![0.0; steps * slices],
        Some((_, year)) => pipeline::pv_day_means(year, &window),
    };

    let traj = compute_periodic_trajectory(&model, &cfg.bounds, &mpc, &d_star, &c_star, &pv_star)?;
    let t_steps = traj.u_star.ncols();
    let n = traj.h_star.nrows();
    let m = traj.u_star.nrows();

    pipeline::ensure_out_dir(out_dir)?;
    let out = out_dir.join("periodic.csv");
    let mut w = pipeline::create(&out)?;
    let mut header = String::from("step");
    for i in 1..=n {
        header.push_str(&format!(",h{i}_m"));
    }
    for j in 1..=m {
        header.push_str(&format!(",u{j}_m3s"));
    }
    writeln!(w, "{header}")?;
    for t in 0..t_steps {
        let mut row = t.to_string();
        for i in 0..n {
            row.push_str(&format!(",{}", traj.h_star[(i, t)]));
        }
        for j in 0..m {
            row.push_str(&format!(",{}", traj.u_star[(j, t)]));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()?;

    let gap = (traj.h_star.column(t_steps) - traj.h_star.column(0)).norm();
    println!(
        "periodic reference over {t_steps} steps at {pv_kw} kW installed; closure gap {gap:.2e} m"
    );
    println!("written to '{}'", out.display());
    Ok(())
}
