//! File formats and synthetic inputs shared by the command line tools:
//! CSV tables, sectioned key-value documents, the fitted-model file,
//! and generators for prices, demand, and forecasts.

pub mod csv;
pub mod kv;
pub mod model_file;
pub mod profiles;
pub mod report;

pub use csv::{
    read_demand_csv, read_power_csv, read_price_csv, read_scenarios_csv, read_weather_csv,
    write_demand_csv, write_power_csv, write_price_csv, write_scenarios_csv, write_sizing_log_csv,
    write_trace_csv, write_weather_csv,
};
pub use kv::{format_float_list, write_kv, KvDoc, KvSection};
pub use model_file::{read_model_file, write_model_file};
pub use profiles::{perturb_forecast, synth_demand, synth_prices};
pub use report::{ledger_json, write_sizing_summary};
