//! Run configuration: a sectioned key-value file that drives every
//! subcommand. Loading validates the whole document and reports every
//! violation at once, not just the first.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use solpump_core::empc::MpcConfig;
use solpump_core::io::{KvDoc, KvSection};
use solpump_core::pv::{ClimateParams, PvPanelParams, StochasticFitConfig};
use solpump_core::sizing::{CostParams, NmConfig};
use solpump_core::wdn::{ExcitationPlan, TankBounds, ToyNetworkSpec};

use crate::network::parse_network;

/// Where the input series come from. Absent paths mean synthetic
/// generation from the run seed.
#[derive(Debug, Clone)]
pub struct DataSources {
    pub weather_csv: Option<PathBuf>,
    pub price_csv: Option<PathBuf>,
    pub demand_csv: Option<PathBuf>,
    pub demand_mean_m3s: f64,
    pub forecast_error_frac: f64,
}

/// MPC knobs as configured; the error box half-width defaults to the
/// one measured during identification.
#[derive(Debug, Clone)]
pub struct MpcSettings {
    pub barrier_a: f64,
    pub barrier_b: f64,
    pub beta: f64,
    pub n_scenarios: usize,
    pub dt_s: f64,
    pub dt_pv_s: f64,
    pub terminal_radius_m: f64,
    pub w_box: Option<Vec<f64>>,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub penalty_rounds: usize,
}

impl MpcSettings {
    pub fn build(&self, n: usize, ident_w: &[f64]) -> MpcConfig {
        MpcConfig {
            barrier_a: DVector::from_element(2 * n, self.barrier_a),
            barrier_b: DVector::from_element(2 * n, self.barrier_b),
            beta: self.beta,
            n_scenarios: self.n_scenarios,
            dt_s: self.dt_s,
            dt_pv_s: self.dt_pv_s,
            terminal_radius_m: self.terminal_radius_m,
            w_box: self.w_box.clone().unwrap_or_else(|| ident_w.to_vec()),
            grad_tol: self.grad_tol,
            max_iters: self.max_iters,
            penalty_init: self.penalty_init,
            penalty_growth: self.penalty_growth,
            penalty_rounds: self.penalty_rounds,
        }
    }
}

/// Sizing knobs: unit costs, the lifespans to summarize, and the
/// direct-search settings.
#[derive(Debug, Clone)]
pub struct SizingSettings {
    pub a_ins_eur_per_w: f64,
    pub a_m_eur_per_kw_yr: f64,
    pub degradation_per_yr: f64,
    pub lifespans: Vec<u32>,
    pub x0_kw: f64,
    pub nm: NmConfig,
}

impl SizingSettings {
    pub fn proto(&self) -> CostParams {
        CostParams {
            a_ins_eur_per_w: self.a_ins_eur_per_w,
            a_m_eur_per_kw_yr: self.a_m_eur_per_kw_yr,
            lambda_pv: 1.0 - self.degradation_per_yr * self.lifespans[0] as f64 / 2.0,
            lifespan_yr: self.lifespans[0],
            degradation_per_yr: self.degradation_per_yr,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    /// Default closed-loop length, days.
    pub days: usize,
    /// Default synthetic dataset length, days.
    pub synth_days: usize,
    pub samples_per_day: usize,
    /// Default scenario-fan size of the `sample` command.
    pub scenarios: usize,
    pub data: DataSources,
    pub climate: ClimateParams,
    pub panel: PvPanelParams,
    pub fit_cfg: StochasticFitConfig,
    pub network: ToyNetworkSpec,
    pub bounds: TankBounds,
    pub ident: ExcitationPlan,
    pub mpc: MpcSettings,
    pub sizing: SizingSettings,
}

struct Collector<'a> {
    doc: &'a KvDoc,
    errs: Vec<String>,
}

impl<'a> Collector<'a> {
    fn get<T: FromStr + Clone>(&mut self, section: &str, key: &str, default: T) -> T {
        let Some(sec) = self.doc.section(section) else {
            return default;
        };
        match sec.parsed_or(key, default.clone()) {
            Ok(v) => v,
            Err(e) => {
                self.errs.push(e.to_string());
                default
            }
        }
    }

    fn section(&self, name: &str) -> Option<&'a KvSection> {
        self.doc.section(name)
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.errs.push(msg.into());
    }
}

fn default_bounds_for(spec: &ToyNetworkSpec) -> TankBounds {
    let n = spec.n_states();
    let m = spec.n_pumps();
    let mut h_max = vec![3.0; n];
    if n == 2 {
        h_max[1] = 2.8;
    }
    let h_min: Vec<f64> = h_max.iter().map(|v| v / 2.0).collect();
    TankBounds::new(h_min, h_max, vec![0.1; m]).expect("default bounds are consistent")
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config '{}': {e}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::load_str(&text, base)
    }

    /// Parses and validates a config document; relative paths resolve
    /// against `base`.
    pub fn load_str(text: &str, base: &Path) -> anyhow::Result<RunConfig> {
        let doc = KvDoc::parse(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        let mut c = Collector { doc: &doc, errs: Vec::new() };

        let seed = c.get("run", "seed", 42_u64);
        let days = c.get("run", "days", 30_usize);
        let synth_days = c.get("run", "synth_days", 730_usize);
        let samples_per_day = c.get("run", "samples_per_day", 96_usize);
        let scenarios = c.get("run", "scenarios", 10_usize);
        if days == 0 || days > 365 {
            c.push(format!("run.days must lie in [1, 365], got {days}"));
        }
        if synth_days < 366 {
            c.push(format!("run.synth_days must be at least 366, got {synth_days}"));
        }

        let data = load_data(&mut c, base);
        let climate = load_climate(&mut c);
        let panel = load_panel(&mut c);
        let fit_cfg = load_stochastic(&mut c);
        let (network, bounds) = load_network_block(&mut c, base);
        let ident = load_ident(&mut c, &data);
        let mpc = load_mpc(&mut c, network.n_states());
        let sizing = load_sizing(&mut c);

        if samples_per_day == 0
            || (samples_per_day as f64 * mpc.dt_pv_s - 86_400.0).abs() > 1e-6
        {
            c.push(format!(
                "run.samples_per_day = {samples_per_day} does not cover one day at mpc.dt_pv_s = {}",
                mpc.dt_pv_s
            ));
        }

        if c.errs.is_empty() {
            Ok(RunConfig {
                seed,
                days,
                synth_days,
                samples_per_day,
                scenarios,
                data,
                climate,
                panel,
                fit_cfg,
                network,
                bounds,
                ident,
                mpc,
                sizing,
            })
        } else {
            anyhow::bail!("configuration rejected:\n  - {}", c.errs.join("\n  - "))
        }
    }
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_data(c: &mut Collector, base: &Path) -> DataSources {
    let path_of = |key: &str, what: &str, c: &mut Collector| -> Option<PathBuf> {
        let raw = c.section("data").and_then(|s| s.get(key)).map(String::from)?;
        let path = resolve(base, &raw);
        if !path.is_file() {
            c.push(format!("{what} file '{}' not found", path.display()));
        }
        Some(path)
    };
    let weather_csv = path_of("weather_csv", "weather", c);
    let price_csv = path_of("price_csv", "price", c);
    let demand_csv = path_of("demand_csv", "demand", c);
    let demand_mean_m3s = c.get("data", "demand_mean_m3s", 0.08_f64);
    let forecast_error_frac = c.get("data", "forecast_error_frac", 0.04_f64);
    if !(demand_mean_m3s > 0.0) {
        c.push(format!("data.demand_mean_m3s must be positive, got {demand_mean_m3s}"));
    }
    if !(0.0..=0.2).contains(&forecast_error_frac) {
        c.push(format!(
            "data.forecast_error_frac must lie in [0, 0.2], got {forecast_error_frac}"
        ));
    }
    DataSources { weather_csv, price_csv, demand_csv, demand_mean_m3s, forecast_error_frac }
}

fn load_climate(c: &mut Collector) -> ClimateParams {
    let d = ClimateParams::default();
    ClimateParams {
        noon_mean_wm2: c.get("climate", "noon_mean_wm2", d.noon_mean_wm2),
        noon_amp_wm2: c.get("climate", "noon_amp_wm2", d.noon_amp_wm2),
        daylight_mean_h: c.get("climate", "daylight_mean_h", d.daylight_mean_h),
        daylight_amp_h: c.get("climate", "daylight_amp_h", d.daylight_amp_h),
        shape_exponent: c.get("climate", "shape_exponent", d.shape_exponent),
        cloud_mean: c.get("climate", "cloud_mean", d.cloud_mean),
        cloud_amp: c.get("climate", "cloud_amp", d.cloud_amp),
        cloud_rho: c.get("climate", "cloud_rho", d.cloud_rho),
        cloud_sigma: c.get("climate", "cloud_sigma", d.cloud_sigma),
        cloud_floor: c.get("climate", "cloud_floor", d.cloud_floor),
        clear_sky: c.get("climate", "clear_sky", d.clear_sky),
        temp_mean_c: c.get("climate", "temp_mean_c", d.temp_mean_c),
        temp_amp_c: c.get("climate", "temp_amp_c", d.temp_amp_c),
        temp_diurnal_c: c.get("climate", "temp_diurnal_c", d.temp_diurnal_c),
        temp_sigma_c: c.get("climate", "temp_sigma_c", d.temp_sigma_c),
        wind_mean_ms: c.get("climate", "wind_mean_ms", d.wind_mean_ms),
        wind_amp_ms: c.get("climate", "wind_amp_ms", d.wind_amp_ms),
        wind_sigma_ms: c.get("climate", "wind_sigma_ms", d.wind_sigma_ms),
    }
}

fn load_panel(c: &mut Collector) -> PvPanelParams {
    let p_stc_kw = c.get("panel", "p_stc_kw", 1.0_f64);
    let mu0 = c.get("panel", "mu0", 25.0_f64);
    let mu1 = c.get("panel", "mu1", 6.84_f64);
    let mut k = [-0.017237, -0.040465, -0.004702, 0.000149, 0.000170, 0.000005];
    if let Some(sec) = c.section("panel") {
        if sec.get("k").is_some() {
            match sec.float_list("k") {
                Ok(v) if v.len() == 6 => k.copy_from_slice(&v),
                Ok(v) => c.push(format!("panel.k needs 6 values, got {}", v.len())),
                Err(e) => c.push(e.to_string()),
            }
        }
    }
    match PvPanelParams::new(p_stc_kw, k, mu0, mu1) {
        Ok(p) => p,
        Err(e) => {
            c.push(e.to_string());
            PvPanelParams::new(1.0, k, 25.0, 6.84).expect("fallback panel")
        }
    }
}

fn load_stochastic(c: &mut Collector) -> StochasticFitConfig {
    let d = StochasticFitConfig::default();
    let cfg = StochasticFitConfig {
        alpha: c.get("stochastic", "alpha", d.alpha),
        fourier_order: c.get("stochastic", "fourier_order", d.fourier_order),
        sunrise_threshold: c.get("stochastic", "sunrise_threshold", d.sunrise_threshold),
        long_ar_order: c
            .section("stochastic")
            .and_then(|s| s.get("long_ar_order"))
            .map(String::from)
            .and_then(|raw| match raw.parse() {
                Ok(v) => Some(v),
                Err(_) => {
                    c.push(format!("stochastic.long_ar_order must be an integer, got '{raw}'"));
                    None
                }
            }),
        eps_tol_frac: c.get("stochastic", "eps_tol_frac", d.eps_tol_frac),
        max_attempts: c.get("stochastic", "max_attempts", d.max_attempts),
        posterior_grid: c.get("stochastic", "posterior_grid", d.posterior_grid),
    };
    if !(0.0..=1.0).contains(&cfg.alpha) {
        c.push(format!(
            "stochastic.alpha is the EWMA weight and must lie in [0, 1], got {}",
            cfg.alpha
        ));
    }
    if cfg.fourier_order == 0 {
        c.push("stochastic.fourier_order must be at least 1");
    }
    if !(cfg.sunrise_threshold > 0.0 && cfg.sunrise_threshold < 1.0) {
        c.push(format!(
            "stochastic.sunrise_threshold must lie in (0, 1), got {}",
            cfg.sunrise_threshold
        ));
    }
    if !(cfg.eps_tol_frac > 0.0) {
        c.push("stochastic.eps_tol_frac must be positive");
    }
    if cfg.max_attempts == 0 || cfg.posterior_grid < 2 {
        c.push("stochastic sampling budgets must be positive (grid at least 2)");
    }
    cfg
}

fn load_network_block(c: &mut Collector, base: &Path) -> (ToyNetworkSpec, TankBounds) {
    let spec_default = ToyNetworkSpec::toy();
    match c.section("network").and_then(|s| s.get("file")).map(String::from) {
        None => {
            let bounds = default_bounds_for(&spec_default);
            (spec_default, bounds)
        }
        Some(raw) => {
            let path = resolve(base, &raw);
            match std::fs::read_to_string(&path) {
                Err(e) => {
                    c.push(format!("network file '{}': {e}", path.display()));
                    let bounds = default_bounds_for(&spec_default);
                    (spec_default, bounds)
                }
                Ok(text) => match parse_network(&text) {
                    Ok(net) => (net.spec, net.bounds),
                    Err(errs) => {
                        for e in errs {
                            c.push(format!("network file '{}': {e}", path.display()));
                        }
                        let bounds = default_bounds_for(&spec_default);
                        (spec_default, bounds)
                    }
                },
            }
        }
    }
}

fn load_ident(c: &mut Collector, data: &DataSources) -> ExcitationPlan {
    let d = ExcitationPlan::default();
    let plan = ExcitationPlan {
        days: c.get("network", "ident_days", d.days),
        train_days: c.get("network", "ident_train_days", d.train_days),
        sample_s: c.get("network", "ident_sample_s", d.sample_s),
        control_dt_s: c.get("mpc", "dt_s", 3600.0_f64),
        seed: 0,
        level_min: c.get("network", "ident_level_min", d.level_min),
        level_max: c.get("network", "ident_level_max", d.level_max),
        demand_mean_m3s: data.demand_mean_m3s,
        total_factor_min: c.get("network", "ident_factor_min", d.total_factor_min),
        total_factor_max: c.get("network", "ident_factor_max", d.total_factor_max),
    };
    if plan.train_days == 0 || plan.train_days > plan.days {
        c.push(format!(
            "network.ident_train_days must lie in [1, ident_days], got {}/{}",
            plan.train_days, plan.days
        ));
    }
    plan
}

fn load_mpc(c: &mut Collector, n: usize) -> MpcSettings {
    let w_box = match c.section("mpc").and_then(|s| s.get("w_box")).map(String::from) {
        None => None,
        Some(_) => match c.section("mpc").unwrap().float_list("w_box") {
            Ok(v) if v.len() == n => Some(v),
            Ok(v) => {
                c.push(format!("mpc.w_box needs {n} entries, got {}", v.len()));
                None
            }
            Err(e) => {
                c.push(e.to_string());
                None
            }
        },
    };
    let s = MpcSettings {
        barrier_a: c.get("mpc", "barrier_a", 80.0),
        barrier_b: c.get("mpc", "barrier_b", 0.2),
        beta: c.get("mpc", "beta", 1.0),
        n_scenarios: c.get("mpc", "n_scenarios", 10),
        dt_s: c.get("mpc", "dt_s", 3600.0),
        dt_pv_s: c.get("mpc", "dt_pv_s", 900.0),
        terminal_radius_m: c.get("mpc", "terminal_radius_m", 0.05),
        w_box,
        grad_tol: c.get("mpc", "grad_tol", 1e-6),
        max_iters: c.get("mpc", "max_iters", 200),
        penalty_init: c.get("mpc", "penalty_init", 1e3),
        penalty_growth: c.get("mpc", "penalty_growth", 10.0),
        penalty_rounds: c.get("mpc", "penalty_rounds", 5),
    };
    let probe = s.build(n, &vec![0.1; n]);
    if let Err(e) = probe.validate(n) {
        c.push(e.to_string());
    }
    s
}

fn load_sizing(c: &mut Collector) -> SizingSettings {
    let lifespans = match c.section("cost").and_then(|s| s.get("lifespans")) {
        None => vec![25, 30, 35],
        Some(raw) => {
            let mut out = Vec::new();
            for tok in raw.split_whitespace() {
                match tok.parse::<u32>() {
                    Ok(v) => out.push(v),
                    Err(_) => c.push(format!("cost.lifespans: cannot parse '{tok}'")),
                }
            }
            out
        }
    };
    let s = SizingSettings {
        a_ins_eur_per_w: c.get("cost", "a_ins_eur_per_w", 2.0),
        a_m_eur_per_kw_yr: c.get("cost", "a_m_eur_per_kw_yr", 17.0),
        degradation_per_yr: c.get("cost", "degradation_per_yr", 0.0015),
        lifespans,
        x0_kw: c.get("cost", "x0_kw", 0.0),
        nm: NmConfig {
            step: c.get("cost", "nm_step_kw", 50.0),
            tol_x: c.get("cost", "nm_tol_kw", 1.0),
            max_evals: c.get("cost", "nm_max_evals", 40),
        },
    };
    if s.lifespans.is_empty() {
        c.push("cost.lifespans must name at least one lifespan");
    } else {
        if let Err(e) = s.proto().validate() {
            c.push(e.to_string());
        }
        for &l in &s.lifespans[1..] {
            if !(s.degradation_per_yr * l as f64 / 2.0 < 1.0) {
                c.push(format!("cost: lifespan {l} loses all efficiency to degradation"));
            }
        }
    }
    if let Err(e) = s.nm.validate() {
        c.push(e.to_string());
    }
    if !(s.x0_kw >= 0.0) {
        c.push(format!("cost.x0_kw must be nonnegative, got {}", s.x0_kw));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn an_empty_document_loads_with_defaults() {
        let cfg = RunConfig::load_str("[run]\nseed = 7\n", Path::new(".")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.days, 30);
        assert_eq!(cfg.samples_per_day, 96);
        assert_eq!(cfg.network.n_states(), 2);
        assert_eq!(cfg.bounds.u_max, vec![0.1, 0.1]);
        assert_eq!(cfg.sizing.lifespans, vec![25, 30, 35]);
        assert_eq!(cfg.mpc.barrier_a, 80.0);
        assert!(cfg.mpc.w_box.is_none());
    }

    #[test]
    fn bad_alpha_is_rejected_citing_the_range() {
        let err = RunConfig::load_str("[stochastic]\nalpha = 1.5\n", Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("EWMA"), "{err}");
        assert!(err.contains("[0, 1]"), "{err}");
    }

    #[test]
    fn a_missing_price_file_names_the_path() {
        let err = RunConfig::load_str("[data]\nprice_csv = nope/prices.csv\n", Path::new("/tmp"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("price file"), "{err}");
        assert!(err.contains("nope/prices.csv"), "{err}");
    }

    #[test]
    fn violations_accumulate() {
        let text = "[stochastic]\nalpha = 1.5\n[cost]\nx0_kw = -3\n[run]\ndays = 0\n";
        let err = RunConfig::load_str(text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("alpha"), "{err}");
        assert!(err.contains("x0_kw"), "{err}");
        assert!(err.contains("run.days"), "{err}");
    }

    #[test]
    fn sampling_grid_must_match_the_pv_step() {
        let err = RunConfig::load_str("[run]\nsamples_per_day = 48\n", Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("samples_per_day"), "{err}");
        let ok = RunConfig::load_str(
            "[run]\nsamples_per_day = 48\n[mpc]\ndt_pv_s = 1800\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(ok.mpc.dt_pv_s, 1800.0);
    }
}
