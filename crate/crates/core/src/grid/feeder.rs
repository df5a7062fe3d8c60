//! Radial feeder data model and the plain-text feeder file format.
//!
//! A feeder file is made of bracketed sections with one record per line:
//!
//! ```text
//! # comment
//! [system]
//! base_mva 1.0
//! source_pu 1.0
//! [buses]
//! 800 24.9 slack
//! 802 24.9 -
//! [lines]
//! 800 802 0.53 0.41
//! [loads]
//! 802 30 15
//! [hubs]
//! 802 500 400
//! ```
//!
//! Fields may be separated by whitespace or commas. `[system]` is optional
//! and defaults to a 1 MVA base with the source held at 1.0 p.u.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

/// Errors raised while parsing or validating a feeder.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeederError {
    #[error("line {line}: {field}: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("duplicate bus id `{0}`")]
    DuplicateBus(String),
    #[error("{context} references unknown bus `{bus}`")]
    UnknownBus { context: String, bus: String },
    #[error("feeder has no slack bus")]
    NoSlack,
    #[error("feeder has {0} slack buses, expected exactly one")]
    MultipleSlack(usize),
    #[error("line {from}-{to} closes a cycle")]
    Cycle { from: String, to: String },
    #[error("bus `{0}` is not connected to the slack bus")]
    Disconnected(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    /// Line-to-line base voltage in kV.
    pub base_kv: f64,
    pub is_slack: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from_bus: String,
    pub to_bus: String,
    pub resistance_ohm: f64,
    pub reactance_ohm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadPoint {
    pub bus: String,
    pub p_base_kw: f64,
    pub q_base_kvar: f64,
}

/// A controllable V2G hub. Injection limits apply to each component
/// independently.
#[derive(Debug, Clone, PartialEq)]
pub struct Hub {
    pub bus: String,
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
}

/// An active/reactive power pair in kW / kvar.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Power {
    pub p_kw: f64,
    pub q_kvar: f64,
}

impl Power {
    pub const ZERO: Power = Power {
        p_kw: 0.0,
        q_kvar: 0.0,
    };

    pub fn new(p_kw: f64, q_kvar: f64) -> Self {
        Self { p_kw, q_kvar }
    }
}

/// Tree structure derived from the line list, rooted at the slack bus.
#[derive(Debug, Clone)]
pub(crate) struct Topology {
    /// Bus indices in breadth-first order from the slack bus.
    pub order: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    /// Series impedance (p.u.) of the line connecting a bus to its parent.
    pub z_parent: Vec<Complex64>,
    pub children: Vec<Vec<usize>>,
}

/// A validated radial distribution feeder.
///
/// Immutable after construction; share it freely across threads.
#[derive(Debug, Clone)]
pub struct Feeder {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    loads: Vec<LoadPoint>,
    hubs: Vec<Hub>,
    base_mva: f64,
    source_pu: f64,
    index: HashMap<String, usize>,
    slack: usize,
    load_bus: Vec<usize>,
    hub_bus: Vec<usize>,
    pub(crate) topology: Topology,
}

impl Feeder {
    pub fn new(
        buses: Vec<Bus>,
        lines: Vec<Line>,
        loads: Vec<LoadPoint>,
        hubs: Vec<Hub>,
        base_mva: f64,
        source_pu: f64,
    ) -> Result<Self, FeederError> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(FeederError::Invalid(format!("base_mva must be > 0, got {base_mva}")));
        }
        if !(source_pu.is_finite() && source_pu > 0.0) {
            return Err(FeederError::Invalid(format!("source_pu must be > 0, got {source_pu}")));
        }

        let mut index = HashMap::with_capacity(buses.len());
        for (i, bus) in buses.iter().enumerate() {
            if !(bus.base_kv.is_finite() && bus.base_kv > 0.0) {
                return Err(FeederError::Invalid(format!(
                    "bus `{}` base_kv must be > 0",
                    bus.id
                )));
            }
            if index.insert(bus.id.clone(), i).is_some() {
                return Err(FeederError::DuplicateBus(bus.id.clone()));
            }
        }

        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_slack)
            .map(|(i, _)| i)
            .collect();
        let slack = match slacks.len() {
            0 => return Err(FeederError::NoSlack),
            1 => slacks[0],
            n => return Err(FeederError::MultipleSlack(n)),
        };

        let lookup = |context: &str, bus: &str| -> Result<usize, FeederError> {
            index.get(bus).copied().ok_or_else(|| FeederError::UnknownBus {
                context: context.to_string(),
                bus: bus.to_string(),
            })
        };

        // Union-find over the line list: any line joining two already
        // connected buses closes a cycle.
        let n = buses.len();
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, line) in lines.iter().enumerate() {
            let a = lookup("line", &line.from_bus)?;
            let b = lookup("line", &line.to_bus)?;
            if !(line.resistance_ohm.is_finite() && line.resistance_ohm >= 0.0) {
                return Err(FeederError::Invalid(format!(
                    "line {}-{} resistance must be >= 0",
                    line.from_bus, line.to_bus
                )));
            }
            if !line.reactance_ohm.is_finite()
                || (line.resistance_ohm == 0.0 && line.reactance_ohm == 0.0)
            {
                return Err(FeederError::Invalid(format!(
                    "line {}-{} has zero or non-finite impedance",
                    line.from_bus, line.to_bus
                )));
            }
            let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
            if ra == rb {
                return Err(FeederError::Cycle {
                    from: line.from_bus.clone(),
                    to: line.to_bus.clone(),
                });
            }
            uf[ra] = rb;
            adjacency[a].push((b, k));
            adjacency[b].push((a, k));
        }

        let mut parent = vec![None; n];
        let mut z_parent = vec![Complex64::new(0.0, 0.0); n];
        let mut children = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        seen[slack] = true;
        order.push(slack);
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(v, k) in &adjacency[u] {
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                parent[v] = Some(u);
                children[u].push(v);
                let kv = buses[v].base_kv;
                let z_base = kv * kv / base_mva;
                z_parent[v] =
                    Complex64::new(lines[k].resistance_ohm, lines[k].reactance_ohm) / z_base;
                order.push(v);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(FeederError::Disconnected(buses[i].id.clone()));
        }

        let mut load_bus = Vec::with_capacity(loads.len());
        for load in &loads {
            if !(load.p_base_kw.is_finite() && load.p_base_kw >= 0.0 && load.q_base_kvar.is_finite())
            {
                return Err(FeederError::Invalid(format!(
                    "load at `{}` must have finite p_base_kw >= 0",
                    load.bus
                )));
            }
            load_bus.push(lookup("load", &load.bus)?);
        }
        let mut hub_bus = Vec::with_capacity(hubs.len());
        for hub in &hubs {
            if !(hub.p_max_kw.is_finite() && hub.p_max_kw > 0.0)
                || !(hub.q_max_kvar.is_finite() && hub.q_max_kvar > 0.0)
            {
                return Err(FeederError::Invalid(format!(
                    "hub at `{}` must have positive limits",
                    hub.bus
                )));
            }
            hub_bus.push(lookup("hub", &hub.bus)?);
        }

        Ok(Self {
            buses,
            lines,
            loads,
            hubs,
            base_mva,
            source_pu,
            index,
            slack,
            load_bus,
            hub_bus,
            topology: Topology {
                order,
                parent,
                z_parent,
                children,
            },
        })
    }

    /// Parses and validates feeder file contents.
    pub fn parse(text: &str) -> Result<Self, FeederError> {
        load_feeder(text)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn loads(&self) -> &[LoadPoint] {
        &self.loads
    }

    pub fn hubs(&self) -> &[Hub] {
        &self.hubs
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Slack bus voltage setpoint in p.u.
    pub fn source_pu(&self) -> f64 {
        self.source_pu
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Bus index of each hub, aligned with [`Feeder::hubs`].
    pub fn hub_bus_indices(&self) -> &[usize] {
        &self.hub_bus
    }

    pub(crate) fn load_bus_indices(&self) -> &[usize] {
        &self.load_bus
    }

    /// Upstream neighbour of `bus` on the path to the slack bus.
    pub fn parent_of(&self, bus: usize) -> Option<usize> {
        self.topology.parent[bus]
    }

    pub fn children_of(&self, bus: usize) -> &[usize] {
        &self.topology.children[bus]
    }

    /// Per-unit series impedance of the line feeding `bus` from its parent,
    /// referred to `bus`'s own voltage base.
    pub fn branch_impedance_pu(&self, bus: usize) -> Option<Complex64> {
        self.topology.parent[bus].map(|_| self.topology.z_parent[bus])
    }

    /// Returns a copy of this feeder keeping only the hubs attached to the
    /// given buses, in the order requested.
    pub fn with_hubs<S: AsRef<str>>(&self, buses: &[S]) -> Result<Self, FeederError> {
        let mut hubs = Vec::with_capacity(buses.len());
        for id in buses {
            let id = id.as_ref();
            let hub = self.hubs.iter().find(|h| h.bus == id).ok_or_else(|| {
                FeederError::UnknownBus {
                    context: "hub selection".to_string(),
                    bus: id.to_string(),
                }
            })?;
            hubs.push(hub.clone());
        }
        Feeder::new(
            self.buses.clone(),
            self.lines.clone(),
            self.loads.clone(),
            hubs,
            self.base_mva,
            self.source_pu,
        )
    }

    /// Renders the feeder back into the text format accepted by
    /// [`Feeder::parse`].
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Feeder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[system]")?;
        writeln!(f, "base_mva {}", self.base_mva)?;
        writeln!(f, "source_pu {}", self.source_pu)?;
        writeln!(f, "[buses]")?;
        for b in &self.buses {
            writeln!(f, "{} {} {}", b.id, b.base_kv, if b.is_slack { "slack" } else { "-" })?;
        }
        writeln!(f, "[lines]")?;
        for l in &self.lines {
            writeln!(
                f,
                "{} {} {} {}",
                l.from_bus, l.to_bus, l.resistance_ohm, l.reactance_ohm
            )?;
        }
        writeln!(f, "[loads]")?;
        for l in &self.loads {
            writeln!(f, "{} {} {}", l.bus, l.p_base_kw, l.q_base_kvar)?;
        }
        writeln!(f, "[hubs]")?;
        for h in &self.hubs {
            writeln!(f, "{} {} {}", h.bus, h.p_max_kw, h.q_max_kvar)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    System,
    Buses,
    Lines,
    Loads,
    Hubs,
}

fn parse_f64(line: usize, field: &str, raw: &str) -> Result<f64, FeederError> {
    raw.parse::<f64>().map_err(|_| FeederError::Parse {
        line,
        field: field.to_string(),
        message: format!("expected a number, got `{raw}`"),
    })
}

fn expect_fields(line: usize, section: &str, fields: &[&str], n: usize) -> Result<(), FeederError> {
    if fields.len() != n {
        return Err(FeederError::Parse {
            line,
            field: section.to_string(),
            message: format!("expected {n} fields, got {}", fields.len()),
        });
    }
    Ok(())
}

/// Parses feeder file contents into a validated [`Feeder`].
pub fn load_feeder(text: &str) -> Result<Feeder, FeederError> {
    let mut section = Section::None;
    let mut buses = Vec::new();
    let mut lines = Vec::new();
    let mut loads = Vec::new();
    let mut hubs = Vec::new();
    let mut base_mva = 1.0;
    let mut source_pu = 1.0;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            section = match content {
                "[system]" => Section::System,
                "[buses]" => Section::Buses,
                "[lines]" => Section::Lines,
                "[loads]" => Section::Loads,
                "[hubs]" => Section::Hubs,
                other => {
                    return Err(FeederError::Parse {
                        line: lineno,
                        field: "section".to_string(),
                        message: format!("unknown section `{other}`"),
                    })
                }
            };
            continue;
        }
        let fields: Vec<&str> = content
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        match section {
            Section::None => {
                return Err(FeederError::Parse {
                    line: lineno,
                    field: "section".to_string(),
                    message: "record outside of any section".to_string(),
                })
            }
            Section::System => {
                expect_fields(lineno, "system", &fields, 2)?;
                let value = parse_f64(lineno, fields[0], fields[1])?;
                match fields[0] {
                    "base_mva" => base_mva = value,
                    "source_pu" => source_pu = value,
                    key => {
                        return Err(FeederError::Parse {
                            line: lineno,
                            field: key.to_string(),
                            message: "unknown system key".to_string(),
                        })
                    }
                }
            }
            Section::Buses => {
                expect_fields(lineno, "buses", &fields, 3)?;
                let is_slack = match fields[2].to_ascii_lowercase().as_str() {
                    "slack" | "1" | "true" | "yes" => true,
                    "-" | "0" | "false" | "no" => false,
                    other => {
                        return Err(FeederError::Parse {
                            line: lineno,
                            field: "slack".to_string(),
                            message: format!("expected a slack flag, got `{other}`"),
                        })
                    }
                };
                buses.push(Bus {
                    id: fields[0].to_string(),
                    base_kv: parse_f64(lineno, "base_kv", fields[1])?,
                    is_slack,
                });
            }
            Section::Lines => {
                expect_fields(lineno, "lines", &fields, 4)?;
                lines.push(Line {
                    from_bus: fields[0].to_string(),
                    to_bus: fields[1].to_string(),
                    resistance_ohm: parse_f64(lineno, "r_ohm", fields[2])?,
                    reactance_ohm: parse_f64(lineno, "x_ohm", fields[3])?,
                });
            }
            Section::Loads => {
                expect_fields(lineno, "loads", &fields, 3)?;
                loads.push(LoadPoint {
                    bus: fields[0].to_string(),
                    p_base_kw: parse_f64(lineno, "p_kw", fields[1])?,
                    q_base_kvar: parse_f64(lineno, "q_kvar", fields[2])?,
                });
            }
            Section::Hubs => {
                expect_fields(lineno, "hubs", &fields, 3)?;
                hubs.push(Hub {
                    bus: fields[0].to_string(),
                    p_max_kw: parse_f64(lineno, "p_max_kw", fields[1])?,
                    q_max_kvar: parse_f64(lineno, "q_max_kvar", fields[2])?,
                });
            }
        }
    }

    Feeder::new(buses, lines, loads, hubs, base_mva, source_pu)
}

/// Per-bus demand at load multiplier `lambda`: every base load scaled by
/// `lambda` and summed onto its bus. Buses without loads get zero.
pub fn scale_loads(feeder: &Feeder, lambda: f64) -> Vec<Power> {
    let mut demand = vec![Power::ZERO; feeder.bus_count()];
    for (load, &bus) in feeder.loads().iter().zip(feeder.load_bus_indices()) {
        demand[bus].p_kw += lambda * load.p_base_kw;
        demand[bus].q_kvar += lambda * load.q_base_kvar;
    }
    demand
}

/// Clips each component of a hub setpoint to its rated limit.
pub fn clamp_hub_setpoint(hub: &Hub, p_kw: f64, q_kvar: f64) -> (f64, f64) {
    (
        p_kw.clamp(-hub.p_max_kw, hub.p_max_kw),
        q_kvar.clamp(-hub.q_max_kvar, hub.q_max_kvar),
    )
}
