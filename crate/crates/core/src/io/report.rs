//! Result summaries: the closed-loop cost ledger as JSON and the
//! sizing outcome as a key-value file.

use std::io::Write;

use super::kv::write_kv;
use crate::empc::CostLedger;
use crate::error::Result;
use crate::sizing::SizingRun;

/// Serializes a run ledger together with the yearly maintenance
/// attributed to the installed size.
pub fn ledger_json(ledger: &CostLedger, maintenance_eur: f64) -> String {
    let value = serde_json::json!({
        "grid_cost_eur": ledger.grid_cost_eur,
        "maintenance_eur": maintenance_eur,
        "infeasible_steps": ledger.infeasible_steps,
        "violation_steps": ledger.violation_steps,
        "solves": ledger.solves,
    });
    serde_json::to_string_pretty(&value).expect("ledger serializes")
}

/// Writes the sizing summary: the search optimum of the first
/// lifespan, then the smoothed optimum per lifespan.
pub fn write_sizing_summary<W: Write>(w: W, run: &SizingRun) -> Result<()> {
    let mut sections: Vec<(String, Vec<(&str, String)>)> = Vec::new();
    let best = run.best();
    sections.push((
        "sizing".to_string(),
        vec![
            ("best_x_kw", format!("{}", best.nm_x_kw.unwrap_or(f64::NAN))),
            ("best_total_eur", format!("{}", best.nm_total_eur.unwrap_or(f64::NAN))),
            ("evaluations", run.evals.len().to_string()),
            ("converged", run.nm_converged.to_string()),
            ("fit_a", format!("{}", run.fit.a)),
            ("fit_b", format!("{}", run.fit.b)),
            ("fit_c0", format!("{}", run.fit.c0)),
        ],
    ));
    for s in &run.summaries {
        sections.push((
            format!("lifespan_{}", s.lifespan_yr),
            vec![
                ("expfit_x_kw", format!("{}", s.expfit_x_kw)),
                ("expfit_total_eur", format!("{}", s.expfit_total_eur)),
            ],
        ));
    }
    let borrowed: Vec<(&str, Vec<(&str, String)>)> =
        sections.iter().map(|(n, e)| (n.as_str(), e.clone())).collect();
    write_kv(w, &borrowed)
}
