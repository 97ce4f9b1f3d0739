//! Nonlinear truth model of a small water distribution network.
//!
//! Tanks integrate their net inflow; junctions are algebraic nodes whose
//! heads balance the pipe flows, pump inflows, and demands at every
//! instant. Pipe headloss follows the Hazen-Williams law (a linear law
//! is available for plumbing tests). This model plays the role that a
//! full hydraulic simulator would in production: it generates the data
//! the linear control model is identified from.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Specific weight of water, N/m^3.
pub const RHO_G: f64 = 9810.0;

/// Hazen-Williams headloss exponent.
pub const HW_EXPONENT: f64 = 1.852;

/// A node of the network graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Tank(usize),
    Junction(usize),
}

/// Pipe friction law used by the truth simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PipeLaw {
    #[default]
    HazenWilliams,
    /// Flow proportional to head difference; turns the truth model into
    /// an exactly linear plant for self-consistency tests.
    Linear,
}

#[derive(Debug, Clone)]
pub struct Tank {
    pub name: String,
    pub area_m2: f64,
    pub elevation_m: f64,
    pub init_level_m: f64,
    /// Reduced-model state this tank belongs to.
    pub state_group: usize,
}

#[derive(Debug, Clone)]
pub struct Pipe {
    pub from: Node,
    pub to: Node,
    pub resistance: f64,
}

#[derive(Debug, Clone)]
pub struct Pump {
    pub name: String,
    pub into: Node,
    pub inlet_pressure_pa: f64,
    pub max_flow_m3s: f64,
}

#[derive(Debug, Clone)]
pub struct DemandPoint {
    pub node: Node,
    /// Share of the aggregated demand drawn at this node.
    pub weight: f64,
}

/// Static description of the network.
#[derive(Debug, Clone)]
pub struct ToyNetworkSpec {
    pub tanks: Vec<Tank>,
    pub n_junctions: usize,
    pub pipes: Vec<Pipe>,
    pub pumps: Vec<Pump>,
    pub demands: Vec<DemandPoint>,
    pub law: PipeLaw,
    pub pump_efficiency: f64,
}

impl ToyNetworkSpec {
    /// Number of reduced-model states (tank groups).
    pub fn n_states(&self) -> usize {
        self.tanks.iter().map(|t| t.state_group + 1).max().unwrap_or(0)
    }

    pub fn n_pumps(&self) -> usize {
        self.pumps.len()
    }

    fn node_exists(&self, node: Node) -> bool {
        match node {
            Node::Tank(i) => i < self.tanks.len(),
            Node::Junction(i) => i < self.n_junctions,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tanks.is_empty() {
            return Err(Error::Config("network needs at least one tank".into()));
        }
        for t in &self.tanks {
            if !(t.area_m2 > 0.0) || !(t.init_level_m >= 0.0) || !t.elevation_m.is_finite() {
                return Err(Error::Config(format!("tank {} has invalid geometry", t.name)));
            }
        }
        let n_states = self.n_states();
        for g in 0..n_states {
            if !self.tanks.iter().any(|t| t.state_group == g) {
                return Err(Error::Config(format!("state group {g} has no tanks")));
            }
        }
        for p in &self.pipes {
            if !(p.resistance > 0.0) {
                return Err(Error::Config("pipe resistance must be positive".into()));
            }
            if !self.node_exists(p.from) || !self.node_exists(p.to) || p.from == p.to {
                return Err(Error::Config("pipe endpoints invalid".into()));
            }
        }
        for p in &self.pumps {
            if !(p.max_flow_m3s > 0.0) || !(p.inlet_pressure_pa >= 0.0) {
                return Err(Error::Config(format!("pump {} has invalid limits", p.name)));
            }
            if !self.node_exists(p.into) {
                return Err(Error::Config(format!("pump {} feeds a missing node", p.name)));
            }
        }
        if !self.demands.is_empty() {
            let total: f64 = self.demands.iter().map(|d| d.weight).sum();
            if (total - 1.0).abs() > 1e-9 || self.demands.iter().any(|d| d.weight < 0.0) {
                return Err(Error::Config(format!(
                    "demand weights must be non-negative and sum to one, got {total}"
                )));
            }
            for d in &self.demands {
                if !self.node_exists(d.node) {
                    return Err(Error::Config("demand attached to a missing node".into()));
                }
            }
        }
        if !(self.pump_efficiency > 0.0 && self.pump_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "pump efficiency must be in (0, 1], got {}",
                self.pump_efficiency
            )));
        }
        self.check_connected()?;
        // Every junction needs a pipe, otherwise its balance has no
        // degrees of freedom.
        for j in 0..self.n_junctions {
            let touched = self
                .pipes
                .iter()
                .any(|p| p.from == Node::Junction(j) || p.to == Node::Junction(j));
            if !touched {
                return Err(Error::Config(format!("junction {j} has no pipes")));
            }
        }
        Ok(())
    }

    fn node_id(&self, node: Node) -> usize {
        match node {
            Node::Tank(i) => i,
            Node::Junction(i) => self.tanks.len() + i,
        }
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.tanks.len() + self.n_junctions;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            let mut r = i;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = i;
            while parent[c] != c {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        for p in &self.pipes {
            let a = find(&mut parent, self.node_id(p.from));
            let b = find(&mut parent, self.node_id(p.to));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        for i in 1..n {
            if find(&mut parent, i) != root {
                return Err(Error::Config("network graph is not connected".into()));
            }
        }
        Ok(())
    }

    /// The built-in two-zone network: three tanks reduced to two states
    /// (tanks t1 and t2 are strongly coupled and share a state), two
    /// pumped junctions, and demand split across the zones.
    pub fn toy() -> Self {
        ToyNetworkSpec {
            tanks: vec![
                Tank {
                    name: "t1".into(),
                    area_m2: 200.0,
                    elevation_m: 20.0,
                    init_level_m: 2.2,
                    state_group: 0,
                },
                Tank {
                    name: "t2".into(),
                    area_m2: 150.0,
                    elevation_m: 20.0,
                    init_level_m: 2.2,
                    state_group: 0,
                },
                Tank {
                    name: "t3".into(),
                    area_m2: 300.0,
                    elevation_m: 20.0,
                    init_level_m: 2.0,
                    state_group: 1,
                },
            ],
            n_junctions: 2,
            pipes: vec![
                Pipe { from: Node::Tank(0), to: Node::Junction(0), resistance: 40.0 },
                Pipe { from: Node::Tank(1), to: Node::Tank(0), resistance: 60.0 },
                Pipe { from: Node::Tank(2), to: Node::Junction(1), resistance: 50.0 },
                Pipe { from: Node::Junction(0), to: Node::Junction(1), resistance: 30.0 },
            ],
            pumps: vec![
                Pump {
                    name: "p1".into(),
                    into: Node::Junction(0),
                    inlet_pressure_pa: 2.0 * RHO_G,
                    max_flow_m3s: 0.1,
                },
                Pump {
                    name: "p2".into(),
                    into: Node::Junction(1),
                    inlet_pressure_pa: 2.0 * RHO_G,
                    max_flow_m3s: 0.1,
                },
            ],
            demands: vec![
                DemandPoint { node: Node::Junction(0), weight: 0.55 },
                DemandPoint { node: Node::Junction(1), weight: 0.45 },
            ],
            law: PipeLaw::HazenWilliams,
            pump_efficiency: 0.75,
        }
    }
}

/// Headloss across a pipe carrying flow `q`, odd in `q`.
pub fn hazen_williams_headloss(resistance: f64, q: f64) -> f64 {
    resistance * q * q.abs().powf(HW_EXPONENT - 1.0)
}

fn pipe_flow(law: PipeLaw, resistance: f64, dh: f64) -> f64 {
    match law {
        PipeLaw::HazenWilliams => dh.signum() * (dh.abs() / resistance).powf(1.0 / HW_EXPONENT),
        PipeLaw::Linear => dh / resistance,
    }
}

fn pipe_flow_deriv(law: PipeLaw, resistance: f64, dh: f64) -> f64 {
    match law {
        PipeLaw::HazenWilliams => {
            let a = dh.abs().max(1e-9);
            (a / resistance).powf(1.0 / HW_EXPONENT - 1.0) / (HW_EXPONENT * resistance)
        }
        PipeLaw::Linear => 1.0 / resistance,
    }
}

/// Stateful truth simulator. Junction heads are kept between calls as a
/// warm start for the balance solver.
#[derive(Debug, Clone)]
pub struct TruthSim {
    pub spec: ToyNetworkSpec,
    pub levels: Vec<f64>,
    junction_heads: Vec<f64>,
    pub max_substep_s: f64,
}

impl TruthSim {
    pub fn new(spec: ToyNetworkSpec) -> Result<Self> {
        spec.validate()?;
        let levels: Vec<f64> = spec.tanks.iter().map(|t| t.init_level_m).collect();
        let head0 = spec
            .tanks
            .iter()
            .map(|t| t.elevation_m + t.init_level_m)
            .fold(f64::NEG_INFINITY, f64::max);
        let junction_heads = vec![head0; spec.n_junctions];
        Ok(TruthSim { spec, levels, junction_heads, max_substep_s: 30.0 })
    }

    pub fn set_levels(&mut self, levels: &[f64]) -> Result<()> {
        if levels.len() != self.spec.tanks.len() {
            return Err(Error::Input(format!(
                "expected {} levels, got {}",
                self.spec.tanks.len(),
                levels.len()
            )));
        }
        if levels.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Input("levels must be non-negative and finite".into()));
        }
        self.levels.copy_from_slice(levels);
        Ok(())
    }

    fn head(&self, node: Node) -> f64 {
        match node {
            Node::Tank(i) => self.spec.tanks[i].elevation_m + self.levels[i],
            Node::Junction(i) => self.junction_heads[i],
        }
    }

    fn check_inputs(&self, u: &[f64], d_a: f64) -> Result<()> {
        if u.len() != self.spec.pumps.len() {
            return Err(Error::Input(format!(
                "expected {} pump flows, got {}",
                self.spec.pumps.len(),
                u.len()
            )));
        }
        for (flow, pump) in u.iter().zip(&self.spec.pumps) {
            if !(*flow >= 0.0) || *flow > pump.max_flow_m3s * (1.0 + 1e-9) {
                return Err(Error::Input(format!(
                    "pump {} flow {flow} outside [0, {}]",
                    pump.name, pump.max_flow_m3s
                )));
            }
        }
        if !(d_a >= 0.0) || !d_a.is_finite() {
            return Err(Error::Input(format!("demand must be non-negative, got {d_a}")));
        }
        if d_a > 0.0 && self.spec.demands.is_empty() {
            return Err(Error::Input("demand given but the network has no demand nodes".into()));
        }
        Ok(())
    }

    /// Net external injection (pumps minus demand) at a node, m^3/s.
    fn injection(&self, node: Node, u: &[f64], d_a: f64) -> f64 {
        let mut inj = 0.0;
        for (pump, &flow) in self.spec.pumps.iter().zip(u) {
            if pump.into == node {
                inj += flow;
            }
        }
        for d in &self.spec.demands {
            if d.node == node {
                inj -= d_a * d.weight;
            }
        }
        inj
    }

    /// Solves the junction balance equations at the current levels by a
    /// damped Newton iteration, updating the stored junction heads.
    fn solve_junctions(&mut self, u: &[f64], d_a: f64) -> Result<()> {
        let nj = self.spec.n_junctions;
        if nj == 0 {
            return Ok(());
        }
        let residual = |sim: &TruthSim, heads: &[f64]| -> DVector<f64> {
            let mut r = DVector::zeros(nj);
            for j in 0..nj {
                r[j] = sim.injection(Node::Junction(j), u, d_a);
            }
            for pipe in &sim.spec.pipes {
                let h_from = match pipe.from {
                    Node::Junction(i) => heads[i],
                    n => sim.head(n),
                };
                let h_to = match pipe.to {
                    Node::Junction(i) => heads[i],
                    n => sim.head(n),
                };
                let q = pipe_flow(sim.spec.law, pipe.resistance, h_from - h_to);
                if let Node::Junction(i) = pipe.to {
                    r[i] += q;
                }
                if let Node::Junction(i) = pipe.from {
                    r[i] -= q;
                }
            }
            r
        };

        let mut heads = self.junction_heads.clone();
        let mut r = residual(self, &heads);
        for _ in 0..100 {
            if r.amax() < 1e-11 {
                self.junction_heads = heads;
                return Ok(());
            }
            let mut jac = DMatrix::zeros(nj, nj);
            for pipe in &self.spec.pipes {
                let h_from = match pipe.from {
                    Node::Junction(i) => heads[i],
                    n => self.head(n),
                };
                let h_to = match pipe.to {
                    Node::Junction(i) => heads[i],
                    n => self.head(n),
                };
                let d = pipe_flow_deriv(self.spec.law, pipe.resistance, h_from - h_to);
                // q flows from `from` to `to`; dq/dh_from = d, dq/dh_to = -d.
                if let Node::Junction(i) = pipe.to {
                    if let Node::Junction(k) = pipe.from {
                        jac[(i, k)] += d;
                    }
                    jac[(i, i)] -= d;
                }
                if let Node::Junction(i) = pipe.from {
                    if let Node::Junction(k) = pipe.to {
                        jac[(i, k)] += d;
                    }
                    jac[(i, i)] -= d;
                }
            }
            let lu = jac.lu();
            let step = lu
                .solve(&(-&r))
                .ok_or_else(|| Error::Simulation("junction balance Jacobian is singular".into()))?;
            let mut t = 1.0;
            let base = r.norm();
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> =
                    heads.iter().zip(step.iter()).map(|(&h, &s)| h + t * s).collect();
                let r_trial = residual(self, &trial);
                if r_trial.norm() < base {
                    heads = trial;
                    r = r_trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // No direction improves any more; the iterate is at the
                // floating-point floor of the balance equations.
                if r.amax() < 1e-8 {
                    self.junction_heads = heads;
                    return Ok(());
                }
                return Err(Error::Simulation(
                    "junction balance line search stalled".into(),
                ));
            }
        }
        if r.amax() < 1e-8 {
            self.junction_heads = heads;
            return Ok(());
        }
        Err(Error::Simulation(format!(
            "junction balance did not converge, residual {:.3e}",
            r.amax()
        )))
    }

    /// Net inflow of each tank at the current state, m^3/s. Solves the
    /// junction balance first.
    pub fn tank_inflows(&mut self, u: &[f64], d_a: f64) -> Result<Vec<f64>> {
        self.check_inputs(u, d_a)?;
        self.solve_junctions(u, d_a)?;
        let mut net: Vec<f64> =
            (0..self.spec.tanks.len()).map(|i| self.injection(Node::Tank(i), u, d_a)).collect();
        for pipe in &self.spec.pipes {
            let q = pipe_flow(
                self.spec.law,
                pipe.resistance,
                self.head(pipe.from) - self.head(pipe.to),
            );
            if let Node::Tank(i) = pipe.to {
                net[i] += q;
            }
            if let Node::Tank(i) = pipe.from {
                net[i] -= q;
            }
        }
        Ok(net)
    }

    /// Advances the tank levels over `dt` seconds with explicit Euler
    /// substeps, holding `u` and `d_a` constant.
    pub fn step(&mut self, u: &[f64], d_a: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Input(format!("step length must be positive, got {dt}")));
        }
        let n_sub = (dt / self.max_substep_s).ceil().max(1.0) as usize;
        let sub = dt / n_sub as f64;
        for _ in 0..n_sub {
            let net = self.tank_inflows(u, d_a)?;
            for (i, tank) in self.spec.tanks.iter().enumerate() {
                self.levels[i] += sub * net[i] / tank.area_m2;
                if self.levels[i] < 0.0 {
                    return Err(Error::Simulation(format!(
                        "tank {} emptied during simulation",
                        tank.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Outlet pressure of each pump at the current state, N/m^2.
    pub fn outlet_pressures(&mut self, u: &[f64], d_a: f64) -> Result<Vec<f64>> {
        self.check_inputs(u, d_a)?;
        self.solve_junctions(u, d_a)?;
        Ok(self.spec.pumps.iter().map(|p| RHO_G * self.head(p.into)).collect())
    }

    /// Reduced state: volume-weighted mean level of each tank group.
    pub fn reduced_state(&self) -> Vec<f64> {
        let n = self.spec.n_states();
        let mut vol = vec![0.0; n];
        let mut area = vec![0.0; n];
        for (tank, &level) in self.spec.tanks.iter().zip(&self.levels) {
            vol[tank.state_group] += tank.area_m2 * level;
            area[tank.state_group] += tank.area_m2;
        }
        vol.iter().zip(&area).map(|(v, a)| v / a).collect()
    }

    /// Rate of change of the reduced state at the current instant, m/s.
    pub fn reduced_rates(&mut self, u: &[f64], d_a: f64) -> Result<Vec<f64>> {
        let net = self.tank_inflows(u, d_a)?;
        let n = self.spec.n_states();
        let mut flow = vec![0.0; n];
        let mut area = vec![0.0; n];
        for (tank, q) in self.spec.tanks.iter().zip(&net) {
            flow[tank.state_group] += q;
            area[tank.state_group] += tank.area_m2;
        }
        Ok(flow.iter().zip(&area).map(|(f, a)| f / a).collect())
    }

    pub fn stored_volume(&self) -> f64 {
        self.spec
            .tanks
            .iter()
            .zip(&self.levels)
            .map(|(t, &l)| t.area_m2 * l)
            .sum()
    }
}

/// One-shot convenience wrapper around [`TruthSim::step`].
pub fn truth_step(
    spec: &ToyNetworkSpec,
    levels: &[f64],
    u: &[f64],
    d_a: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut sim = TruthSim::new(spec.clone())?;
    sim.set_levels(levels)?;
    sim.step(u, d_a, dt)?;
    Ok(sim.levels)
}
