//! Network description file: tanks, pipes, pumps, demand split, and
//! level bounds in one sectioned key-value document.
//!
//! ```text
//! [network]
//! law = hazen-williams
//! pump_efficiency = 0.75
//! junctions = j1 j2
//!
//! [tanks]
//! # name = area_m2 elevation_m init_level_m state_group
//! t1 = 200 20 2.2 0
//!
//! [pipes]
//! # name = from to resistance
//! pl1 = t1 j1 40
//!
//! [pumps]
//! # name = into_node inlet_head_m max_flow_m3s
//! p1 = j1 2 0.1
//!
//! [demand_points]
//! # node = weight
//! j1 = 0.55
//!
//! [bounds]
//! h_min = 1.5 1.4
//! h_max = 3.0 2.8
//! u_max = 0.1 0.1
//! ```
//!
//! Every problem in the file is reported, not only the first.

use solpump_core::io::KvDoc;
use solpump_core::wdn::truth::{DemandPoint, Pipe, Pump, Tank, RHO_G};
use solpump_core::wdn::{Node, PipeLaw, TankBounds, ToyNetworkSpec};

#[derive(Debug)]
pub struct NetworkFile {
    pub spec: ToyNetworkSpec,
    pub bounds: TankBounds,
}

fn resolve_node(
    name: &str,
    tanks: &[String],
    junctions: &[String],
    errs: &mut Vec<String>,
    context: &str,
) -> Node {
    if let Some(i) = tanks.iter().position(|t| t == name) {
        return Node::Tank(i);
    }
    if let Some(i) = junctions.iter().position(|j| j == name) {
        return Node::Junction(i);
    }
    errs.push(format!("{context}: unknown node '{name}'"));
    Node::Junction(0)
}

fn number_list(value: &str, want: usize, context: &str, errs: &mut Vec<String>) -> Vec<f64> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != want {
        errs.push(format!("{context}: expected {want} numbers, got {}", parts.len()));
        return vec![0.0; want];
    }
    parts
        .iter()
        .map(|p| {
            p.parse().unwrap_or_else(|_| {
                errs.push(format!("{context}: cannot parse '{p}'"));
                0.0
            })
        })
        .collect()
}

pub fn parse_network(text: &str) -> Result<NetworkFile, Vec<String>> {
    let doc = match KvDoc::parse(text) {
        Ok(d) => d,
        Err(e) => return Err(vec![e.to_string()]),
    };
    let mut errs: Vec<String> = Vec::new();

    let mut law = PipeLaw::HazenWilliams;
    let mut pump_efficiency = 0.75;
    let mut junction_names: Vec<String> = Vec::new();
    if let Some(net) = doc.section("network") {
        match net.get("law") {
            None | Some("hazen-williams") => {}
            Some("linear") => law = PipeLaw::Linear,
            Some(other) => errs.push(format!(
                "network.law must be 'hazen-williams' or 'linear', got '{other}'"
            )),
        }
        match net.parsed_or("pump_efficiency", 0.75) {
            Ok(v) => pump_efficiency = v,
            Err(e) => errs.push(e.to_string()),
        }
        if let Some(j) = net.get("junctions") {
            junction_names = j.split_whitespace().map(String::from).collect();
        }
    }

    let mut tanks: Vec<Tank> = Vec::new();
    let mut tank_names: Vec<String> = Vec::new();
    if let Some(sec) = doc.section("tanks") {
        for e in &sec.entries {
            let v = number_list(&e.value, 4, &format!("tank '{}'", e.key), &mut errs);
            if v[3] < 0.0 || v[3].fract() != 0.0 {
                errs.push(format!("tank '{}': state group must be a whole number", e.key));
            }
            tank_names.push(e.key.clone());
            tanks.push(Tank {
                name: e.key.clone(),
                area_m2: v[0],
                elevation_m: v[1],
                init_level_m: v[2],
                state_group: v[3].max(0.0) as usize,
            });
        }
    } else {
        errs.push("missing section [tanks]".into());
    }

    let mut pipes: Vec<Pipe> = Vec::new();
    if let Some(sec) = doc.section("pipes") {
        for e in &sec.entries {
            let parts: Vec<&str> = e.value.split_whitespace().collect();
            let context = format!("pipe '{}'", e.key);
            if parts.len() != 3 {
                errs.push(format!("{context}: expected 'from to resistance'"));
                continue;
            }
            let from = resolve_node(parts[0], &tank_names, &junction_names, &mut errs, &context);
            let to = resolve_node(parts[1], &tank_names, &junction_names, &mut errs, &context);
            let resistance = parts[2].parse().unwrap_or_else(|_| {
                errs.push(format!("{context}: cannot parse resistance '{}'", parts[2]));
                1.0
            });
            pipes.push(Pipe { from, to, resistance });
        }
    }

    let mut pumps: Vec<Pump> = Vec::new();
    if let Some(sec) = doc.section("pumps") {
        for e in &sec.entries {
            let parts: Vec<&str> = e.value.split_whitespace().collect();
            let context = format!("pump '{}'", e.key);
            if parts.len() != 3 {
                errs.push(format!("{context}: expected 'into inlet_head_m max_flow_m3s'"));
                continue;
            }
            let into = resolve_node(parts[0], &tank_names, &junction_names, &mut errs, &context);
            let nums = number_list(&parts[1..].join(" "), 2, &context, &mut errs);
            pumps.push(Pump {
                name: e.key.clone(),
                into,
                inlet_pressure_pa: nums[0] * RHO_G,
                max_flow_m3s: nums[1],
            });
        }
    } else {
        errs.push("missing section [pumps]".into());
    }

    let mut demands: Vec<DemandPoint> = Vec::new();
    if let Some(sec) = doc.section("demand_points") {
        for e in &sec.entries {
            let context = format!("demand point '{}'", e.key);
            let node = resolve_node(&e.key, &tank_names, &junction_names, &mut errs, &context);
            match e.value.parse::<f64>() {
                Ok(w) => demands.push(DemandPoint { node, weight: w }),
                Err(_) => errs.push(format!("{context}: cannot parse weight '{}'", e.value)),
            }
        }
    } else {
        errs.push("missing section [demand_points]".into());
    }

    let spec = ToyNetworkSpec {
        tanks,
        n_junctions: junction_names.len(),
        pipes,
        pumps,
        demands,
        law,
        pump_efficiency,
    };
    if errs.is_empty() {
        if let Err(e) = spec.validate() {
            errs.push(e.to_string());
        }
    }

    let n = spec.n_states();
    let m = spec.n_pumps();
    let mut bounds = None;
    match doc.section("bounds") {
        None => errs.push("missing section [bounds]".into()),
        Some(sec) => {
            let h_min = sec.float_list("h_min").map_err(|e| errs.push(e.to_string())).ok();
            let h_max = sec.float_list("h_max").map_err(|e| errs.push(e.to_string())).ok();
            let u_max = sec.float_list("u_max").map_err(|e| errs.push(e.to_string())).ok();
            if let (Some(h_min), Some(h_max), Some(u_max)) = (h_min, h_max, u_max) {
                if h_min.len() != n || h_max.len() != n {
                    errs.push(format!("bounds: level lists must have {n} entries"));
                } else if u_max.len() != m {
                    errs.push(format!("bounds: u_max must have {m} entries"));
                } else {
                    match TankBounds::new(h_min, h_max, u_max) {
                        Ok(b) => bounds = Some(b),
                        Err(e) => errs.push(e.to_string()),
                    }
                }
            }
        }
    }

    match (errs.is_empty(), bounds) {
        (true, Some(bounds)) => Ok(NetworkFile { spec, bounds }),
        _ => Err(errs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
[network]
law = hazen-williams
pump_efficiency = 0.75
junctions = j1 j2

[tanks]
t1 = 200 20 2.2 0
t2 = 150 20 2.2 0
t3 = 300 20 2.0 1

[pipes]
pl1 = t1 j1 40
pl2 = t2 t1 60
pl3 = t3 j2 50
pl4 = j1 j2 30

[pumps]
p1 = j1 2 0.1
p2 = j2 2 0.1

[demand_points]
j1 = 0.55
j2 = 0.45

[bounds]
h_min = 1.5 1.4
h_max = 3.0 2.8
u_max = 0.1 0.1
";

    #[test]
    fn the_bundled_layout_parses() {
        let net = parse_network(GOOD).unwrap();
        assert_eq!(net.spec.n_states(), 2);
        assert_eq!(net.spec.n_pumps(), 2);
        assert_eq!(net.spec.tanks[2].state_group, 1);
        assert_eq!(net.bounds.h_max, vec![3.0, 2.8]);
        assert!(matches!(net.spec.pipes[1].to, Node::Tank(0)));
        assert_eq!(net.spec.pumps[0].inlet_pressure_pa, 2.0 * RHO_G);
    }

    #[test]
    fn all_problems_come_back_at_once() {
        let bad = GOOD
            .replace("pl1 = t1 j1 40", "pl1 = t9 j1 40")
            .replace("u_max = 0.1 0.1", "u_max = 0.1");
        let errs = parse_network(&bad).unwrap_err();
        let joined = errs.join("\n");
        assert!(joined.contains("unknown node 't9'"), "{joined}");
        assert!(joined.contains("u_max"), "{joined}");
        assert!(errs.len() >= 2);
    }

    #[test]
    fn missing_sections_are_named() {
        let errs = parse_network("[network]\njunctions = j1\n").unwrap_err();
        let joined = errs.join("\n");
        for want in ["[tanks]", "[pumps]", "[demand_points]", "[bounds]"] {
            assert!(joined.contains(want), "{joined}");
        }
    }
}
