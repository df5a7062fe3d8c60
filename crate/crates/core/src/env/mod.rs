//! The voltage-regulation MDP.
//!
//! Observations are the uncontrolled bus voltages at the load level the
//! agent is about to act on; an action is a vector of normalised (P, Q)
//! factors per hub; the reward scores the controlled power-flow solution.
//! In the idealized phase hub setpoints pass straight to the grid; in the
//! fleet-constrained phase every request goes through that hub's fleet
//! allocation first.

mod profile;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use profile::{daily_profile, DailyProfile, ProfileKind, HOURS_PER_DAY};

use crate::fleet::{allocate, FleetState};
use crate::grid::{clamp_hub_setpoint, scale_loads, solve_power_flow, Feeder, Hub, Power, PowerFlowSolution};

pub const V_MIN_PU: f64 = 0.95;
pub const V_MAX_PU: f64 = 1.05;
pub const IN_RANGE_BONUS: f64 = 10.0;
pub const PENALTY_PER_PU: f64 = 100.0;
pub const DEFAULT_NONCONVERGENCE_PENALTY: f64 = -1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("environment must be reset before stepping")]
    NotReset,
    #[error("action has {got} components, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("action contains a non-finite component")]
    NonFiniteAction,
    #[error("no convergent operating point after {0} load resamples")]
    Degenerate(usize),
    #[error("uncontrolled power flow did not converge at hour {0}")]
    EvaluationDiverged(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub v_pu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    /// `[a_P1, a_Q1, a_P2, a_Q2, ...]`, each in `[-1, 1]`.
    pub factors: Vec<f64>,
}

impl Action {
    pub fn new(factors: Vec<f64>) -> Self {
        Self { factors }
    }

    pub fn zeros(hubs: usize) -> Self {
        Self {
            factors: vec![0.0; 2 * hubs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Buses outside `[V_MIN_PU, V_MAX_PU]` in the controlled solve.
    pub violations: usize,
    pub min_v: f64,
    pub max_v: f64,
    pub mean_v: f64,
    /// Controlled solve voltages.
    pub v_pu: Vec<f64>,
    pub converged: bool,
    pub requested: Vec<Power>,
    pub delivered: Vec<Power>,
    pub rho: Vec<f64>,
    pub lambda: f64,
    pub hour: Option<usize>,
    /// Fleet-average SOC after the step, fleet-constrained phase only.
    pub mean_soc: Option<f64>,
    pub participating: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Uncontrolled voltages at the next decision point.
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Fixed hub limits, no fleet model.
    Idealized,
    /// Requests pass through per-hub fleet allocation.
    FleetConstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    PerStep,
    PerEpisode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpisodeMode {
    Training {
        episode_len: usize,
        lambda_range: (f64, f64),
        resample: Resample,
    },
    Evaluation {
        profile: DailyProfile,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub phase: Phase,
    pub mode: EpisodeMode,
    /// Hours `[start, end)` during which hubs may act.
    pub v2g_window: (usize, usize),
    pub nonconvergence_penalty: f64,
    /// Step length used for battery integration, hours.
    pub dt_h: f64,
    /// Load resamples allowed when a training state fails to converge.
    pub max_resamples: usize,
}

impl EnvConfig {
    pub fn training() -> Self {
        Self {
            phase: Phase::Idealized,
            mode: EpisodeMode::Training {
                episode_len: 100,
                lambda_range: (0.1, 4.0),
                resample: Resample::PerStep,
            },
            v2g_window: (6, 23),
            nonconvergence_penalty: DEFAULT_NONCONVERGENCE_PENALTY,
            dt_h: 1.0,
            max_resamples: 50,
        }
    }

    pub fn evaluation(profile: DailyProfile, phase: Phase) -> Self {
        Self {
            phase,
            mode: EpisodeMode::Evaluation { profile },
            ..Self::training()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if let EpisodeMode::Training {
            episode_len,
            lambda_range: (lo, hi),
            ..
        } = self.mode
        {
            if episode_len == 0 {
                return Err(EnvError::Config("episode_len must be >= 1".into()));
            }
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(EnvError::Config(format!("bad lambda_range [{lo}, {hi}]")));
            }
        }
        let (start, end) = self.v2g_window;
        if start > end || end > HOURS_PER_DAY {
            return Err(EnvError::Config(format!("bad v2g window [{start}, {end})")));
        }
        if !(self.dt_h > 0.0) {
            return Err(EnvError::Config("dt_h must be > 0".into()));
        }
        Ok(())
    }

    pub fn episode_len(&self) -> usize {
        match self.mode {
            EpisodeMode::Training { episode_len, .. } => episode_len,
            EpisodeMode::Evaluation { .. } => HOURS_PER_DAY,
        }
    }
}

/// Counters for conditions that are handled but worth surfacing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub degenerate_resamples: usize,
    pub clamped_actions: usize,
    pub nonconverged_steps: usize,
}

/// Bonus when every voltage is in band, otherwise the summed penalty of
/// the violating buses (100 per p.u. outside the band).
pub fn reward(v_pu: &[f64]) -> f64 {
    let penalty: f64 = v_pu
        .iter()
        .map(|&v| {
            if v < V_MIN_PU {
                (V_MIN_PU - v) * PENALTY_PER_PU
            } else if v > V_MAX_PU {
                (v - V_MAX_PU) * PENALTY_PER_PU
            } else {
                0.0
            }
        })
        .sum();
    if v_pu.iter().all(|&v| (V_MIN_PU..=V_MAX_PU).contains(&v)) {
        IN_RANGE_BONUS
    } else {
        -penalty
    }
}

/// [`reward`] for a solve, or `penalty` when it did not converge.
pub fn solution_reward(solution: &PowerFlowSolution, penalty: f64) -> f64 {
    if solution.converged {
        reward(&solution.v_pu)
    } else {
        penalty
    }
}

pub fn in_window(hour: Option<usize>, window: (usize, usize)) -> bool {
    match hour {
        Some(h) => (window.0..window.1).contains(&(h % HOURS_PER_DAY)),
        None => true,
    }
}

/// Maps normalised factors onto kW/kvar requests. Out-of-range components
/// are clipped to `[-1, 1]` and counted; outside the V2G window every
/// setpoint is zero.
pub fn action_to_setpoints(
    action: &Action,
    hubs: &[Hub],
    hour: Option<usize>,
    window: (usize, usize),
) -> Result<(Vec<Power>, usize), EnvError> {
    if action.factors.len() != 2 * hubs.len() {
        return Err(EnvError::ActionLength {
            expected: 2 * hubs.len(),
            got: action.factors.len(),
        });
    }
    if action.factors.iter().any(|a| !a.is_finite()) {
        return Err(EnvError::NonFiniteAction);
    }
    let clamped = action.factors.iter().filter(|a| a.abs() > 1.0).count();
    if !in_window(hour, window) {
        return Ok((vec![Power::ZERO; hubs.len()], clamped));
    }
    let setpoints = hubs
        .iter()
        .zip(action.factors.chunks_exact(2))
        .map(|(hub, a)| {
            Power::new(
                a[0].clamp(-1.0, 1.0) * hub.p_max_kw,
                a[1].clamp(-1.0, 1.0) * hub.q_max_kvar,
            )
        })
        .collect();
    Ok((setpoints, clamped))
}

/// One environment instance; single owner.
#[derive(Debug, Clone)]
pub struct V2gEnv {
    feeder: Arc<Feeder>,
    config: EnvConfig,
    initial_fleets: Vec<FleetState>,
    fleets: Vec<FleetState>,
    rng: ChaCha8Rng,
    t: usize,
    lambda: f64,
    episode_lambda: f64,
    observation: Option<Observation>,
    diagnostics: Diagnostics,
}

impl V2gEnv {
    /// `fleets` holds one fleet per feeder hub and is required (and only
    /// used) in the fleet-constrained phase.
    pub fn new(feeder: Arc<Feeder>, config: EnvConfig, fleets: Vec<FleetState>) -> Result<Self, EnvError> {
        config.validate()?;
        if feeder.hubs().is_empty() {
            return Err(EnvError::Config("feeder has no hubs to control".into()));
        }
        if config.phase == Phase::FleetConstrained && fleets.len() != feeder.hubs().len() {
            return Err(EnvError::Config(format!(
                "fleet-constrained phase needs {} fleets, got {}",
                feeder.hubs().len(),
                fleets.len()
            )));
        }
        Ok(Self {
            feeder,
            config,
            fleets: fleets.clone(),
            initial_fleets: fleets,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
            lambda: 0.0,
            episode_lambda: 0.0,
            observation: None,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn feeder(&self) -> &Feeder {
        &self.feeder
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn observation_dim(&self) -> usize {
        self.feeder.bus_count()
    }

    pub fn action_dim(&self) -> usize {
        2 * self.feeder.hubs().len()
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    pub fn fleets(&self) -> &[FleetState] {
        &self.fleets
    }

    /// Load multiplier the next action will be applied at.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn step_index(&self) -> usize {
        self.t
    }

    /// Clock hour of the next step in evaluation mode.
    pub fn hour(&self) -> Option<usize> {
        match self.config.mode {
            EpisodeMode::Evaluation { .. } => Some(self.t % HOURS_PER_DAY),
            EpisodeMode::Training { .. } => None,
        }
    }

    fn fleet_hour(&self) -> usize {
        self.t % HOURS_PER_DAY
    }

    fn sample_lambda(&mut self, t: usize) -> f64 {
        match &self.config.mode {
            EpisodeMode::Evaluation { profile } => profile.at(t),
            EpisodeMode::Training {
                lambda_range: (lo, hi),
                resample,
                ..
            } => {
                let (lo, hi) = (*lo, *hi);
                match resample {
                    Resample::PerEpisode if t > 0 => self.episode_lambda,
                    _ => {
                        let l = if hi > lo { self.rng.random_range(lo..=hi) } else { lo };
                        if t == 0 {
                            self.episode_lambda = l;
                        }
                        l
                    }
                }
            }
        }
    }

    fn uncontrolled(&self, lambda: f64) -> PowerFlowSolution {
        let demands = scale_loads(&self.feeder, lambda);
        solve_power_flow(&self.feeder, &demands, &vec![Power::ZERO; self.feeder.hubs().len()])
    }

    /// Picks the load level for step `t` and returns its uncontrolled
    /// observation. Training states that fail to converge are resampled.
    fn prepare(&mut self, t: usize) -> Result<Observation, EnvError> {
        let mut attempts = 0;
        loop {
            let lambda = self.sample_lambda(t);
            let sol = self.uncontrolled(lambda);
            if sol.converged {
                self.lambda = lambda;
                return Ok(Observation { v_pu: sol.v_pu });
            }
            match self.config.mode {
                EpisodeMode::Evaluation { .. } => {
                    return Err(EnvError::EvaluationDiverged(t % HOURS_PER_DAY))
                }
                EpisodeMode::Training { resample, .. } => {
                    self.diagnostics.degenerate_resamples += 1;
                    attempts += 1;
                    if attempts > self.config.max_resamples {
                        return Err(EnvError::Degenerate(attempts));
                    }
                    if resample == Resample::PerEpisode && t > 0 {
                        // The episode's multiplier is unusable; draw a new one.
                        self.episode_lambda = self.sample_lambda(0);
                    }
                }
            }
        }
    }

    /// Starts a new episode. Fleets return to their initial state, the
    /// clock to hour 0, and the load RNG is reseeded from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
        self.fleets = self.initial_fleets.clone();
        let obs = self.prepare(0)?;
        self.observation = Some(obs.clone());
        Ok(obs)
    }

    pub fn observation(&self) -> Option<&Observation> {
        self.observation.as_ref()
    }

    fn delivered_for(&mut self, requested: &[Power], commit: bool) -> (Vec<Power>, Vec<f64>) {
        match self.config.phase {
            Phase::Idealized => (requested.to_vec(), vec![1.0; requested.len()]),
            Phase::FleetConstrained => {
                let hour = self.fleet_hour();
                let dt = self.config.dt_h;
                let mut delivered = Vec::with_capacity(requested.len());
                let mut rho = Vec::with_capacity(requested.len());
                for (req, fleet) in requested.iter().zip(self.fleets.iter_mut()) {
                    let r = if commit {
                        allocate(req.p_kw, req.q_kvar, fleet, hour, dt)
                    } else {
                        fleet.plan(req.p_kw, req.q_kvar, hour, dt)
                    };
                    delivered.push(Power::new(r.p_sup_kw, r.q_sup_kvar));
                    rho.push(r.rho);
                }
                (delivered, rho)
            }
        }
    }

    fn requested(&mut self, action: &Action) -> Result<Vec<Power>, EnvError> {
        let (setpoints, clamped) =
            action_to_setpoints(action, self.feeder.hubs(), self.hour(), self.config.v2g_window)?;
        self.diagnostics.clamped_actions += clamped;
        Ok(setpoints
            .iter()
            .zip(self.feeder.hubs())
            .map(|(s, hub)| {
                let (p, q) = clamp_hub_setpoint(hub, s.p_kw, s.q_kvar);
                Power::new(p, q)
            })
            .collect())
    }

    /// Solves the controlled power flow for `action` at the current load
    /// level without advancing time or touching fleet state.
    pub fn preview(&mut self, action: &Action) -> Result<PowerFlowSolution, EnvError> {
        if self.observation.is_none() {
            return Err(EnvError::NotReset);
        }
        let requested = self.requested(action)?;
        let (delivered, _) = self.delivered_for(&requested, false);
        let demands = scale_loads(&self.feeder, self.lambda);
        Ok(solve_power_flow(&self.feeder, &demands, &delivered))
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if self.observation.is_none() {
            return Err(EnvError::NotReset);
        }
        let hour = self.hour();
        let requested = self.requested(action)?;
        let (delivered, rho) = self.delivered_for(&requested, true);
        let demands = scale_loads(&self.feeder, self.lambda);
        let solution = solve_power_flow(&self.feeder, &demands, &delivered);
        if !solution.converged {
            self.diagnostics.nonconverged_steps += 1;
        }
        let reward = solution_reward(&solution, self.config.nonconvergence_penalty);
        let violations = solution
            .v_pu
            .iter()
            .filter(|&&v| !(V_MIN_PU..=V_MAX_PU).contains(&v))
            .count();
        let (mean_soc, participating) = match self.config.phase {
            Phase::Idealized => (None, 0),
            Phase::FleetConstrained => {
                let n: usize = self.fleets.iter().map(|f| f.len()).sum();
                let soc: f64 = self
                    .fleets
                    .iter()
                    .flat_map(|f| f.evs.iter().map(|e| e.soc))
                    .sum();
                (
                    Some(soc / n.max(1) as f64),
                    self.fleets.iter().map(|f| f.participating()).sum(),
                )
            }
        };
        let info = StepInfo {
            violations,
            min_v: solution.min_v(),
            max_v: solution.max_v(),
            mean_v: solution.mean_v(),
            converged: solution.converged,
            v_pu: solution.v_pu,
            requested,
            delivered,
            rho,
            lambda: self.lambda,
            hour,
            mean_soc,
            participating,
        };

        self.t += 1;
        let done = self.t % self.config.episode_len() == 0;
        let observation = self.prepare(self.t)?;
        self.observation = Some(observation.clone());
        Ok(StepResult {
            observation,
            reward,
            done,
            info,
        })
    }
}
