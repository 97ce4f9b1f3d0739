//! CSV formats shared by the command line tools.
//!
//! Numbers are written with the shortest representation that parses
//! back to the same value, so a file read in and written out again is
//! byte-identical. Readers check the header and report malformed rows
//! with their line number.

use std::io::{Read, Write};

use crate::empc::TraceRow;
use crate::error::{Error, Result};
use crate::pv::WeatherSample;
use crate::sizing::SizingEval;

const WEATHER_HEADER: [&str; 4] = ["timestamp", "irradiance_wm2", "temp_c", "wind_ms"];
const POWER_HEADER: [&str; 2] = ["timestamp", "power_kw"];
const SCENARIO_HEADER: [&str; 3] = ["scenario_id", "time_index", "power_kw"];
const PRICE_HEADER: [&str; 2] = ["time_index", "eur_per_kwh"];
const DEMAND_HEADER: [&str; 2] = ["time_index", "m3_per_s"];
const SIZING_HEADER: [&str; 6] = ["x_kw", "total_eur", "opex_eur", "capex_eur", "seed", "evals"];

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn check_header(record: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    let got: Vec<&str> = record.iter().collect();
    if got != expected {
        return Err(Error::Input(format!(
            "{what} header mismatch: expected {}, got {}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    what: &str,
) -> Result<T> {
    let raw = record.get(idx).ok_or_else(|| {
        Error::Input(format!("line {}: missing {what}", line_of(record)))
    })?;
    raw.trim().parse().map_err(|_| {
        Error::Input(format!("line {}: cannot parse {what} from '{raw}'", line_of(record)))
    })
}

pub fn write_weather_csv<W: Write>(w: W, samples: &[WeatherSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(WEATHER_HEADER)?;
    for s in samples {
        out.write_record([
            s.timestamp.to_string(),
            fmt(s.irradiance),
            fmt(s.ambient_temp),
            fmt(s.wind_speed),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_weather_csv<R: Read>(r: R) -> Result<Vec<WeatherSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers()?, &WEATHER_HEADER, "weather")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let s = WeatherSample {
            timestamp: parse_field(&rec, 0, "timestamp")?,
            irradiance: parse_field(&rec, 1, "irradiance_wm2")?,
            ambient_temp: parse_field(&rec, 2, "temp_c")?,
            wind_speed: parse_field(&rec, 3, "wind_ms")?,
        };
        if s.irradiance < 0.0 || s.wind_speed < 0.0 {
            return Err(Error::Input(format!(
                "line {}: irradiance and wind speed must be non-negative",
                line_of(&rec)
            )));
        }
        if let Some(prev) = out.last() {
            let prev: &WeatherSample = prev;
            if s.timestamp <= prev.timestamp {
                return Err(Error::Input(format!(
                    "line {}: timestamps must be strictly increasing",
                    line_of(&rec)
                )));
            }
        }
        out.push(s);
    }
    if out.len() >= 3 {
        let step = out[1].timestamp - out[0].timestamp;
        for pair in out.windows(2) {
            if pair[1].timestamp - pair[0].timestamp != step {
                return Err(Error::Input(format!(
                    "weather timestamps are unevenly spaced near t = {}",
                    pair[1].timestamp
                )));
            }
        }
    }
    Ok(out)
}

pub fn write_power_csv<W: Write>(w: W, timestamps: &[i64], values: &[f64]) -> Result<()> {
    if timestamps.len() != values.len() {
        return Err(Error::Input("timestamps and values must have equal length".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(POWER_HEADER)?;
    for (t, v) in timestamps.iter().zip(values) {
        out.write_record([t.to_string(), fmt(*v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_power_csv<R: Read>(r: R) -> Result<(Vec<i64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers()?, &POWER_HEADER, "power")?;
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        ts.push(parse_field(&rec, 0, "timestamp")?);
        vs.push(parse_field::<f64>(&rec, 1, "power_kw")?);
    }
    Ok((ts, vs))
}

/// Writes a fan of scenarios, one row per scenario and time index.
pub fn write_scenarios_csv<W: Write>(w: W, scenarios: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCENARIO_HEADER)?;
    for (s, traj) in scenarios.iter().enumerate() {
        for (t, v) in traj.iter().enumerate() {
            out.write_record([s.to_string(), t.to_string(), fmt(*v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_scenarios_csv<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers()?, &SCENARIO_HEADER, "scenario")?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let sid: usize = parse_field(&rec, 0, "scenario_id")?;
        let tid: usize = parse_field(&rec, 1, "time_index")?;
        let v: f64 = parse_field(&rec, 2, "power_kw")?;
        if sid == out.len() && tid == 0 {
            out.push(Vec::new());
        }
        let traj = out.get_mut(sid).ok_or_else(|| {
            Error::Input(format!("line {}: scenario ids must be contiguous", line_of(&rec)))
        })?;
        if tid != traj.len() {
            return Err(Error::Input(format!(
                "line {}: time indices must be contiguous per scenario",
                line_of(&rec)
            )));
        }
        traj.push(v);
    }
    Ok(out)
}

fn write_indexed_csv<W: Write>(w: W, header: &[&str], values: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for (i, v) in values.iter().enumerate() {
        out.write_record([i.to_string(), fmt(*v)])?;
    }
    out.flush()?;
    Ok(())
}

fn read_indexed_csv<R: Read>(r: R, header: &[&str], what: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(rdr.headers()?, header, what)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let idx: usize = parse_field(&rec, 0, "time_index")?;
        if idx != out.len() {
            return Err(Error::Input(format!(
                "line {}: time indices must count up from zero",
                line_of(&rec)
            )));
        }
        out.push(parse_field::<f64>(&rec, 1, header[1])?);
    }
    Ok(out)
}

pub fn write_price_csv<W: Write>(w: W, values: &[f64]) -> Result<()> {
    write_indexed_csv(w, &PRICE_HEADER, values)
}

pub fn read_price_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    read_indexed_csv(r, &PRICE_HEADER, "price")
}

pub fn write_demand_csv<W: Write>(w: W, values: &[f64]) -> Result<()> {
    write_indexed_csv(w, &DEMAND_HEADER, values)
}

pub fn read_demand_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    read_indexed_csv(r, &DEMAND_HEADER, "demand")
}

/// Writes a closed-loop trace. The header names one level column per
/// state and one flow column per pump.
pub fn write_trace_csv<W: Write>(w: W, trace: &[TraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let (n, m) = trace.first().map(|r| (r.h.len(), r.u.len())).unwrap_or((0, 0));
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|i| format!("h{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend(["d_a", "P_p_kw", "P_pv_kw", "P_grid_kw", "price"].map(String::from));
    out.write_record(&header)?;
    for row in trace {
        if row.h.len() != n || row.u.len() != m {
            return Err(Error::Input("trace rows disagree on dimensions".into()));
        }
        let mut rec = vec![fmt(row.time_h)];
        rec.extend(row.h.iter().map(|v| fmt(*v)));
        rec.extend(row.u.iter().map(|v| fmt(*v)));
        rec.extend([
            fmt(row.d_a),
            fmt(row.pump_kw),
            fmt(row.pv_kw),
            fmt(row.grid_kw),
            fmt(row.price),
        ]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the sizing search log, one row per simulated candidate with
/// a running evaluation counter.
pub fn write_sizing_log_csv<W: Write>(w: W, evals: &[SizingEval]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SIZING_HEADER)?;
    for (i, e) in evals.iter().enumerate() {
        out.write_record([
            fmt(e.x_kw),
            fmt(e.total_eur),
            fmt(e.opex_eur),
            fmt(e.capex_eur),
            e.seed.to_string(),
            (i + 1).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(ts: i64, g: f64) -> WeatherSample {
        WeatherSample { timestamp: ts, irradiance: g, ambient_temp: 11.5, wind_speed: 3.25 }
    }

    #[test]
    fn weather_round_trips_byte_for_byte() {
        let samples = vec![sample(0, 0.0), sample(900, 312.0625), sample(1800, 0.1)];
        let mut buf = Vec::new();
        write_weather_csv(&mut buf, &samples).unwrap();
        let back = read_weather_csv(buf.as_slice()).unwrap();
        assert_eq!(back, samples);
        let mut again = Vec::new();
        write_weather_csv(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn weather_reader_rejects_bad_rows() {
        let text = "timestamp,irradiance_wm2,temp_c,wind_ms\n0,100,10,2\n900,-5,10,2\n";
        let err = read_weather_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");

        let text = "timestamp,irradiance_wm2,temp_c,wind_ms\n0,100,10,2\n0,90,10,2\n";
        assert!(read_weather_csv(text.as_bytes()).is_err());

        let text = "timestamp,irradiance_wm2,temp_c,wind_ms\n0,a,10,2\n";
        let err = read_weather_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("irradiance"), "{err}");

        let text = "time,irradiance_wm2,temp_c,wind_ms\n";
        let err = read_weather_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("header"), "{err}");
    }

    #[test]
    fn uneven_spacing_is_rejected() {
        let samples = vec![sample(0, 1.0), sample(900, 1.0), sample(2700, 1.0)];
        let mut buf = Vec::new();
        write_weather_csv(&mut buf, &samples).unwrap();
        assert!(read_weather_csv(buf.as_slice()).is_err());
    }

    #[test]
    fn indexed_series_round_trip_and_gap_detection() {
        let prices = vec![0.25, 0.5, 0.125];
        let mut buf = Vec::new();
        write_price_csv(&mut buf, &prices).unwrap();
        assert_eq!(read_price_csv(buf.as_slice()).unwrap(), prices);

        let text = "time_index,m3_per_s\n0,0.05\n2,0.06\n";
        assert!(read_demand_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn scenario_fan_round_trips() {
        let fan = vec![vec![0.0, 1.5, 2.0], vec![0.5, 1.0, 0.25]];
        let mut buf = Vec::new();
        write_scenarios_csv(&mut buf, &fan).unwrap();
        assert_eq!(read_scenarios_csv(buf.as_slice()).unwrap(), fan);
    }

    #[test]
    fn trace_header_matches_dimensions() {
        let row = TraceRow {
            time_h: 0.25,
            h: vec![2.0, 2.5],
            u: vec![0.05],
            d_a: 0.04,
            pump_kw: 12.0,
            pv_kw: 3.0,
            grid_kw: 9.0,
            price: 0.3,
        };
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,h1,h2,u1,d_a,P_p_kw,P_pv_kw,P_grid_kw,price\n"));
        assert!(text.contains("0.25,2,2.5,0.05,0.04,12,3,9,0.3"));
    }

    #[test]
    fn power_round_trips() {
        let ts = vec![0, 900, 1800];
        let vs = vec![0.0, 1.0625, 0.5];
        let mut buf = Vec::new();
        write_power_csv(&mut buf, &ts, &vs).unwrap();
        let (t2, v2) = read_power_csv(buf.as_slice()).unwrap();
        assert_eq!(t2, ts);
        assert_eq!(v2, vs);
    }
}
