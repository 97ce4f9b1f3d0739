//! Fitted stochastic PV model as a sectioned key-value file, together
//! with the day state the next sample starts from.
//!
//! Floats print in shortest round-trip form, so saving and loading
//! reproduces the model exactly; the sunrise window is recomputed from
//! the stored profile rather than stored.

use std::io::Write;

use super::kv::{format_float_list, write_kv, KvDoc};
use crate::error::{Error, Result};
use crate::pv::{DayState, PvStochasticModel};
use crate::pv::stochastic::PeriodicFit;

fn fit_entries(fit: &PeriodicFit) -> Vec<(&'static str, String)> {
    vec![
        ("period", format!("{}", fit.period)),
        ("a0", format!("{}", fit.a0)),
        ("cos", format_float_list(&fit.cos_coeffs)),
        ("sin", format_float_list(&fit.sin_coeffs)),
    ]
}

fn read_fit(doc: &KvDoc, name: &str) -> Result<PeriodicFit> {
    let sec = doc.require(name)?;
    let fit = PeriodicFit {
        period: sec.parsed("period")?,
        a0: sec.parsed("a0")?,
        cos_coeffs: sec.float_list("cos")?,
        sin_coeffs: sec.float_list("sin")?,
    };
    if fit.cos_coeffs.len() != fit.sin_coeffs.len() {
        return Err(Error::Config(format!(
            "[{name}] cos and sin lists must have equal length"
        )));
    }
    Ok(fit)
}

pub fn write_model_file<W: Write>(
    w: W,
    model: &PvStochasticModel,
    init: &DayState,
) -> Result<()> {
    write_kv(
        w,
        &[
            (
                "model",
                vec![
                    ("samples_per_day", model.samples_per_day.to_string()),
                    ("alpha", format!("{}", model.alpha)),
                    ("sunrise_threshold", format!("{}", model.sunrise_threshold)),
                    ("eps_tol_frac", format!("{}", model.eps_tol_frac)),
                    ("max_attempts", model.max_attempts.to_string()),
                    ("posterior_grid", model.posterior_grid.to_string()),
                ],
            ),
            ("g", fit_entries(&model.g)),
            ("gamma", fit_entries(&model.gamma)),
            (
                "arma",
                vec![
                    ("mu", format!("{}", model.arma.mu)),
                    ("phi", format!("{}", model.arma.phi)),
                    ("theta", format!("{}", model.arma.theta)),
                    ("sigma", format!("{}", model.arma.sigma)),
                ],
            ),
            (
                "logar",
                vec![
                    ("mu", format!("{}", model.logar.mu)),
                    ("phi", format!("{}", model.logar.phi)),
                    ("sigma", format!("{}", model.logar.sigma)),
                ],
            ),
            (
                "init",
                vec![
                    ("day_index", init.day_index.to_string()),
                    ("eps_prev", format!("{}", init.eps_prev)),
                    ("zeta_prev", format!("{}", init.zeta_prev)),
                    ("profile", format_float_list(&init.profile)),
                ],
            ),
        ],
    )
}

pub fn read_model_file(text: &str) -> Result<(PvStochasticModel, DayState)> {
    let doc = KvDoc::parse(text)?;
    let m = doc.require("model")?;
    let arma_sec = doc.require("arma")?;
    let logar_sec = doc.require("logar")?;
    let model = PvStochasticModel {
        samples_per_day: m.parsed("samples_per_day")?,
        alpha: m.parsed("alpha")?,
        sunrise_threshold: m.parsed("sunrise_threshold")?,
        g: read_fit(&doc, "g")?,
        gamma: read_fit(&doc, "gamma")?,
        arma: crate::pv::stochastic::ArmaParams {
            mu: arma_sec.parsed("mu")?,
            phi: arma_sec.parsed("phi")?,
            theta: arma_sec.parsed("theta")?,
            sigma: arma_sec.parsed("sigma")?,
        },
        logar: crate::pv::stochastic::LogArParams {
            mu: logar_sec.parsed("mu")?,
            phi: logar_sec.parsed("phi")?,
            sigma: logar_sec.parsed("sigma")?,
        },
        eps_tol_frac: m.parsed("eps_tol_frac")?,
        max_attempts: m.parsed("max_attempts")?,
        posterior_grid: m.parsed("posterior_grid")?,
    };
    model.validate()?;
    let i = doc.require("init")?;
    let profile = i.float_list("profile")?;
    if profile.len() != model.samples_per_day {
        return Err(Error::Config(format!(
            "[init] profile has {} values, model expects {}",
            profile.len(),
            model.samples_per_day
        )));
    }
    let init = DayState::new(
        i.parsed("day_index")?,
        profile,
        model.sunrise_threshold,
        i.parsed("eps_prev")?,
        i.parsed("zeta_prev")?,
    )?;
    Ok((model, init))
}
