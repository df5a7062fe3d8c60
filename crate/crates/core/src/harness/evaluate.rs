//! One 24-hour evaluation of a controller on a scenario.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, hourly_mean, MetricSummary, VoltageSnapshot};
use super::scenario::Scenario;
use super::HarnessError;
use crate::droop::DroopConfig;
use crate::env::{Action, Observation, Phase, V2gEnv, HOURS_PER_DAY};
use crate::fleet::FleetState;
use crate::sac::SacAgent;

/// Damped iterations allowed when droop runs to a fixed point.
const FIXED_POINT_MAX_ITERS: usize = 200;
const FIXED_POINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    None,
    Rl,
    Droop,
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerKind::None => "none",
            ControllerKind::Rl => "rl",
            ControllerKind::Droop => "droop",
        })
    }
}

impl FromStr for ControllerKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "rl" => Ok(Self::Rl),
            "droop" => Ok(Self::Droop),
            other => Err(HarnessError::Usage(format!("unknown controller `{other}`"))),
        }
    }
}

pub enum Controller {
    None,
    Droop,
    Rl(Box<SacAgent>),
}

impl Controller {
    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::None => ControllerKind::None,
            Controller::Droop => ControllerKind::Droop,
            Controller::Rl(_) => ControllerKind::Rl,
        }
    }
}

/// Row label in the comparison table.
pub fn row_label(kind: ControllerKind, multi_hub: bool, ev_constrained: bool) -> String {
    let base = match kind {
        ControllerKind::None => return "Baseline".into(),
        ControllerKind::Rl => "RL",
        ControllerKind::Droop => "Droop",
    };
    let tag = match (multi_hub, ev_constrained) {
        (true, false) => "coord.",
        (true, true) => "coord., EV-constr.",
        (false, true) => "EV-constr.",
        (false, false) => "no EV",
    };
    format!("{base} ({tag})")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HubRecord {
    pub p_kw: f64,
    pub q_kvar: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub hour: usize,
    pub lambda: f64,
    pub converged: bool,
    /// Absent when the controlled solve did not converge.
    pub voltage: Option<VoltageStats>,
    pub hubs: Vec<HubRecord>,
    pub reward: f64,
    /// Mean SOC over every EV at the end of the hour.
    pub soc_mean: Option<f64>,
    pub ev_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub label: String,
    pub controller: ControllerKind,
    pub ev_constrained: bool,
    pub feeder: String,
    pub feeder_hash: String,
    pub hub_buses: Vec<String>,
    pub profile: String,
    pub seed: u64,
    pub hours: Vec<HourRecord>,
    pub summary: MetricSummary,
    pub total_reward: f64,
}

/// Initial fleets for every hub; identical for every controller row that
/// shares `seed`.
pub fn scenario_fleets(scenario: &Scenario, seed: u64) -> Result<Vec<FleetState>, HarnessError> {
    let config = scenario.fleet.as_ref().ok_or_else(|| {
        HarnessError::Scenario("EV-constrained evaluation needs a [fleet] section".into())
    })?;
    let mut config = config.clone();
    if scenario.is_multi_hub() {
        config.availability = None;
    }
    (0..scenario.feeder.hubs().len())
        .map(|k| {
            let hub_seed = seed ^ (k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            config.build(hub_seed).map_err(HarnessError::from)
        })
        .collect()
}

fn droop_fixed_point(env: &mut V2gEnv, droop: &DroopConfig, hub_buses: &[usize], obs: &Observation) -> Result<Vec<f64>, HarnessError> {
    let factors = |v: &[f64]| -> Vec<f64> { hub_buses.iter().flat_map(|&b| droop.factors(v[b])).collect() };
    let mut a = factors(&obs.v_pu);
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let sol = env.preview(&Action::new(a.clone()))?;
        if !sol.converged {
            break;
        }
        let target = factors(&sol.v_pu);
        let next: Vec<f64> = a.iter().zip(&target).map(|(x, t)| 0.5 * x + 0.5 * t).collect();
        let change = a.iter().zip(&next).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        a = next;
        if change < FIXED_POINT_TOL {
            break;
        }
    }
    Ok(a)
}

fn check_agent(scenario: &Scenario, agent: &SacAgent) -> Result<(), HarnessError> {
    let obs = scenario.feeder.bus_count();
    let act = 2 * scenario.feeder.hubs().len();
    if agent.obs_dim() != obs || agent.act_dim() != act {
        return Err(HarnessError::CheckpointMismatch(format!(
            "checkpoint expects {} voltages and {} factors, scenario has {obs} buses and {act} factors",
            agent.obs_dim(),
            agent.act_dim()
        )));
    }
    Ok(())
}

/// Runs the 24-hour day. Without `ev_constrained` hubs act at their
/// idealized limits.
pub fn evaluate(
    scenario: &Scenario,
    controller: &Controller,
    ev_constrained: bool,
    seed: u64,
) -> Result<ScenarioReport, HarnessError> {
    let (phase, fleets) = if ev_constrained {
        (Phase::FleetConstrained, scenario_fleets(scenario, seed)?)
    } else {
        (Phase::Idealized, Vec::new())
    };
    if let Controller::Rl(agent) = controller {
        check_agent(scenario, agent)?;
    }
    let mut env = V2gEnv::new(scenario.feeder.clone(), scenario.evaluation_env(phase), fleets)?;
    let hub_buses = scenario.feeder.hub_bus_indices().to_vec();
    let n_hubs = hub_buses.len();

    let mut obs = env.reset(seed)?;
    let mut hours = Vec::with_capacity(HOURS_PER_DAY);
    let mut snapshots = Vec::with_capacity(HOURS_PER_DAY);
    let mut total_reward = 0.0;
    for hour in 0..HOURS_PER_DAY {
        let factors = match controller {
            Controller::None => vec![0.0; 2 * n_hubs],
            Controller::Droop if scenario.droop.fixed_point => {
                droop_fixed_point(&mut env, &scenario.droop, &hub_buses, &obs)?
            }
            Controller::Droop => hub_buses
                .iter()
                .flat_map(|&b| scenario.droop.factors(obs.v_pu[b]))
                .collect(),
            Controller::Rl(agent) => agent.act_deterministic(&obs.v_pu),
        };
        let res = env.step(&Action::new(factors))?;
        total_reward += res.reward;
        let info = res.info;
        let voltage = info.converged.then(|| VoltageStats {
            mean: hourly_mean(&info.v_pu),
            min: info.min_v,
            max: info.max_v,
        });
        hours.push(HourRecord {
            hour,
            lambda: info.lambda,
            converged: info.converged,
            voltage,
            hubs: info
                .delivered
                .iter()
                .zip(&info.rho)
                .map(|(p, &rho)| HubRecord {
                    p_kw: p.p_kw,
                    q_kvar: p.q_kvar,
                    rho,
                })
                .collect(),
            reward: res.reward,
            soc_mean: info.mean_soc,
            ev_count: info.participating,
        });
        snapshots.push(VoltageSnapshot {
            v_pu: info.v_pu,
            converged: info.converged,
        });
        obs = res.observation;
    }
    let summary = compute_metrics(&snapshots)?;
    Ok(ScenarioReport {
        scenario: scenario.name.clone(),
        label: row_label(controller.kind(), scenario.is_multi_hub(), ev_constrained),
        controller: controller.kind(),
        ev_constrained,
        feeder: scenario.feeder_name.clone(),
        feeder_hash: scenario.feeder_hash.clone(),
        hub_buses: scenario.hub_ids(),
        profile: scenario.profile_label.clone(),
        seed,
        hours,
        summary,
        total_reward,
    })
}
