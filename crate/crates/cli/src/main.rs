//! Command line front end of the PV pump-scheduling and sizing engine.
//!
//! Every command reads one configuration file (`--config`, sectioned
//! key-value text) and writes its outputs under `--out-dir`. All
//! randomness derives from the single `seed` key, so reruns with the
//! same configuration reproduce every output byte for byte.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod network;
mod pipeline;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "solpump", version, about = "Simulation-based PV sizing for a pumped water network", long_about = None)]
struct Cli {
    /// Configuration file; built-in defaults apply when the default
    /// path does not exist.
    #[arg(long, global = true, default_value = "config.kv")]
    config: PathBuf,
    /// Directory the outputs are written to.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic weather, production, price, and demand files.
    Synth {
        /// Length of the weather and production records, days.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Fit the stochastic production model to a power series.
    Fit {
        /// Production CSV to fit; defaults to <out-dir>/power.csv.
        #[arg(long)]
        power: Option<PathBuf>,
    },
    /// Sample production scenarios from a fitted model.
    Sample {
        /// Days per scenario.
        #[arg(long)]
        days: Option<usize>,
        /// Number of scenarios.
        #[arg(long)]
        scenarios: Option<usize>,
        /// Fitted model file; defaults to <out-dir>/model.kv.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compute the periodic daily reference of the controller.
    Periodic {
        /// Days averaged into the reference profiles.
        #[arg(long)]
        days: Option<usize>,
        /// Installed PV amount, kW.
        #[arg(long, default_value_t = 0.0)]
        pv_kw: f64,
    },
    /// Run the controller in closed loop against the nonlinear network.
    Simulate {
        /// Days to simulate.
        #[arg(long)]
        days: Option<usize>,
        /// Installed PV amount, kW.
        #[arg(long, default_value_t = 0.0)]
        pv_kw: f64,
    },
    /// Minimize lifetime cost over the installed PV amount.
    Size {
        /// Simulated days per candidate size, spread over the year.
        #[arg(long)]
        days: Option<usize>,
        /// Comma-separated lifespans to summarize, years.
        #[arg(long)]
        lifespans: Option<String>,
        /// Starting size of the search, kW.
        #[arg(long)]
        x0: Option<f64>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    if cli.config == PathBuf::from("config.kv") && !cli.config.is_file() {
        return RunConfig::load_str("", std::path::Path::new("."));
    }
    RunConfig::load(&cli.config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.command {
        Command::Synth { days } => commands::synth::run(&cfg, &cli.out_dir, days),
        Command::Fit { power } => commands::fit::run(&cfg, &cli.out_dir, power),
        Command::Sample { days, scenarios, model } => {
            commands::sample::run(&cfg, &cli.out_dir, days, scenarios, model)
        }
        Command::Periodic { days, pv_kw } => {
            commands::periodic::run(&cfg, &cli.out_dir, days, pv_kw)
        }
        Command::Simulate { days, pv_kw } => {
            commands::simulate::run(&cfg, &cli.out_dir, days, pv_kw)
        }
        Command::Size { days, lifespans, x0 } => {
            commands::size::run(&cfg, &cli.out_dir, days, lifespans, x0)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
