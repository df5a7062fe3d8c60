//! EV fleet model: per-vehicle power capability, SOC/SOH evolution and the
//! hub-level mapping from requested grid power to feasible battery power.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// SOC band at either end of the range over which capability tapers to zero.
const TAPER_BAND: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FleetError {
    #[error("invalid fleet parameter: {0}")]
    Invalid(String),
}

/// Direction of battery power flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Charge,
    Discharge,
}

impl Direction {
    /// Injecting active power into the grid discharges the batteries.
    pub fn for_request(p_req_kw: f64) -> Self {
        if p_req_kw < 0.0 {
            Direction::Charge
        } else {
            Direction::Discharge
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvUnit {
    pub capacity_kwh: f64,
    pub soc: f64,
    pub soh: f64,
    /// Maximum power as a fraction of capacity per hour.
    pub c_rate_limit: f64,
    /// Informational; SOC is integrated in energy form.
    pub pack_voltage_v: f64,
    pub available: bool,
}

impl EvUnit {
    pub fn new(capacity_kwh: f64, soc: f64, soh: f64, c_rate_limit: f64) -> Self {
        Self {
            capacity_kwh,
            soc,
            soh,
            c_rate_limit,
            pack_voltage_v: 400.0,
            available: true,
        }
    }

    fn validate(&self) -> Result<(), FleetError> {
        if !(self.capacity_kwh > 0.0)
            || !(0.0..=1.0).contains(&self.soc)
            || !(self.soh > 0.0 && self.soh <= 1.0)
            || !(self.c_rate_limit > 0.0)
        {
            return Err(FleetError::Invalid(format!("EV unit out of range: {self:?}")));
        }
        Ok(())
    }

    /// Usable energy at the present state of health, kWh.
    pub fn usable_kwh(&self) -> f64 {
        self.capacity_kwh * self.soh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    /// SOH lost per unit of throughput normalised by nameplate capacity.
    pub cycle_coeff: f64,
    /// SOH lost per hour regardless of use.
    pub calendar_coeff: f64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            cycle_coeff: 5e-6,
            calendar_coeff: 1e-7,
        }
    }
}

/// Current-limited power: C-rate times the degraded capacity.
pub fn current_limited_power(ev: &EvUnit) -> f64 {
    ev.c_rate_limit * ev.capacity_kwh * ev.soh
}

/// Voltage-limited power: the current limit derated linearly inside the
/// bottom (discharge) or top (charge) 10% of the SOC range.
pub fn voltage_limited_power(ev: &EvUnit, direction: Direction) -> f64 {
    let headroom = match direction {
        Direction::Discharge => ev.soc,
        Direction::Charge => 1.0 - ev.soc,
    };
    current_limited_power(ev) * (headroom / TAPER_BAND).clamp(0.0, 1.0)
}

/// Instantaneous power capability of one EV in the given direction, kW.
pub fn battery_power_capability(ev: &EvUnit, direction: Direction) -> f64 {
    if !ev.available {
        return 0.0;
    }
    voltage_limited_power(ev, direction).min(current_limited_power(ev))
}

/// Capability further capped so that holding it for `dt_h` hours cannot
/// run the battery past empty or full.
pub fn deliverable_power(ev: &EvUnit, direction: Direction, dt_h: f64) -> f64 {
    let energy = match direction {
        Direction::Discharge => ev.soc * ev.usable_kwh(),
        Direction::Charge => (1.0 - ev.soc) * ev.usable_kwh(),
    };
    battery_power_capability(ev, direction).min(energy / dt_h)
}

/// Advances one EV by `dt_h` hours at signed battery power `p_bat_kw`
/// (positive charges).
///
/// # Panics
///
/// Panics if `|p_bat_kw|` exceeds the EV's capability in that direction or
/// `dt_h` is not positive; callers clamp first.
pub fn step_battery(ev: &EvUnit, p_bat_kw: f64, dt_h: f64, deg: &DegradationParams) -> EvUnit {
    assert!(dt_h > 0.0, "dt_h must be positive");
    let direction = if p_bat_kw > 0.0 {
        Direction::Charge
    } else {
        Direction::Discharge
    };
    let cap = if p_bat_kw == 0.0 {
        0.0
    } else {
        battery_power_capability(ev, direction)
    };
    assert!(
        p_bat_kw.abs() <= cap * (1.0 + 1e-9) + 1e-12,
        "battery power {p_bat_kw} kW exceeds capability {cap} kW"
    );
    let soc = (ev.soc + p_bat_kw * dt_h / ev.usable_kwh()).clamp(0.0, 1.0);
    let soh_loss =
        deg.cycle_coeff * p_bat_kw.abs() * dt_h / ev.capacity_kwh + deg.calendar_coeff * dt_h;
    EvUnit {
        soc,
        soh: (ev.soh - soh_loss.max(0.0)).max(f64::MIN_POSITIVE),
        ..ev.clone()
    }
}

/// Outcome of one hub-level allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub p_sup_kw: f64,
    pub q_sup_kvar: f64,
    pub rho: f64,
    /// Battery-side power needed for the full request.
    pub p_fleet_kw: f64,
    /// Battery-side power actually drawn (`rho * p_fleet_kw`).
    pub p_drawn_kw: f64,
    /// Deliverable fleet power in the request's direction.
    pub p_avail_kw: f64,
    pub direction: Direction,
}

/// The EVs behind one hub.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    pub evs: Vec<EvUnit>,
    pub eta_inv: f64,
    /// Participation fraction for each hour of the day.
    pub availability_schedule: Vec<f64>,
    pub degradation: DegradationParams,
    /// Fixed priority order in which EVs are marked available.
    order: Vec<usize>,
}

impl FleetState {
    /// Builds a fleet; `seed` fixes the order in which EVs are picked when
    /// only part of the fleet participates.
    pub fn new(
        evs: Vec<EvUnit>,
        eta_inv: f64,
        availability_schedule: Vec<f64>,
        degradation: DegradationParams,
        seed: u64,
    ) -> Result<Self, FleetError> {
        if !(eta_inv > 0.0 && eta_inv <= 1.0) {
            return Err(FleetError::Invalid(format!("eta_inv must be in (0, 1], got {eta_inv}")));
        }
        if availability_schedule.is_empty()
            || availability_schedule.iter().any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(FleetError::Invalid(
                "availability fractions must lie in [0, 1]".to_string(),
            ));
        }
        if !(degradation.cycle_coeff >= 0.0 && degradation.calendar_coeff >= 0.0) {
            return Err(FleetError::Invalid("degradation coefficients must be >= 0".into()));
        }
        for ev in &evs {
            ev.validate()?;
        }
        let mut order: Vec<usize> = (0..evs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            evs,
            eta_inv,
            availability_schedule,
            degradation,
            order,
        })
    }

    /// A fleet so large and lossless that every request is met in full.
    pub fn unconstrained() -> Self {
        let ev = EvUnit::new(1e15, 0.5, 1.0, 1.0);
        Self::new(vec![ev], 1.0, vec![1.0; 24], DegradationParams::default(), 0)
            .expect("valid unconstrained fleet")
    }

    pub fn len(&self) -> usize {
        self.evs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evs.is_empty()
    }

    fn participation(&self, hour: usize) -> f64 {
        self.availability_schedule[hour % self.availability_schedule.len()]
    }

    /// Number of EVs participating at `hour`.
    pub fn available_count(&self, hour: usize) -> usize {
        let n = self.evs.len();
        ((self.participation(hour) * n as f64 + 1e-9).floor() as usize).min(n)
    }

    /// Marks the first `floor(fraction * N)` EVs of the fixed order as
    /// available for `hour` and the rest unavailable.
    pub fn set_hour(&mut self, hour: usize) {
        let k = self.available_count(hour);
        for (rank, &i) in self.order.iter().enumerate() {
            self.evs[i].available = rank < k;
        }
    }

    pub fn mean_soc(&self) -> f64 {
        if self.evs.is_empty() {
            return f64::NAN;
        }
        self.evs.iter().map(|e| e.soc).sum::<f64>() / self.evs.len() as f64
    }

    pub fn participating(&self) -> usize {
        self.evs.iter().filter(|e| e.available).count()
    }

    /// Dry run of [`allocate`]: the delivered powers and ratio without
    /// touching battery state.
    pub fn plan(&mut self, p_req_kw: f64, q_req_kvar: f64, hour: usize, dt_h: f64) -> AllocationResult {
        self.set_hour(hour);
        let direction = Direction::for_request(p_req_kw);
        let s_req = p_req_kw.hypot(q_req_kvar);
        let p_fleet_kw = s_req / self.eta_inv;
        let p_avail_kw: f64 = self
            .evs
            .iter()
            .map(|ev| deliverable_power(ev, direction, dt_h))
            .sum();
        let rho = if p_fleet_kw == 0.0 {
            1.0
        } else {
            (p_avail_kw / p_fleet_kw).min(1.0)
        };
        AllocationResult {
            p_sup_kw: rho * p_req_kw,
            q_sup_kvar: rho * q_req_kvar,
            rho,
            p_fleet_kw,
            p_drawn_kw: rho * p_fleet_kw,
            p_avail_kw,
            direction,
        }
    }
}

/// Sum of per-EV capability over the EVs participating at `hour`.
pub fn fleet_available_power(fleet: &mut FleetState, hour: usize, direction: Direction) -> f64 {
    fleet.set_hour(hour);
    fleet
        .evs
        .iter()
        .map(|ev| battery_power_capability(ev, direction))
        .sum()
}

/// Scales the hub request to what the fleet can deliver, then spreads the
/// battery-side draw over the participating EVs in proportion to their
/// individual capability and advances every EV by `dt_h`.
pub fn allocate(
    p_req_kw: f64,
    q_req_kvar: f64,
    fleet: &mut FleetState,
    hour: usize,
    dt_h: f64,
) -> AllocationResult {
    let result = fleet.plan(p_req_kw, q_req_kvar, hour, dt_h);
    let sign = match result.direction {
        Direction::Charge => 1.0,
        Direction::Discharge => -1.0,
    };
    let deg = fleet.degradation;
    for ev in fleet.evs.iter_mut() {
        let share = if result.p_avail_kw > 0.0 {
            result.p_drawn_kw * deliverable_power(ev, result.direction, dt_h) / result.p_avail_kw
        } else {
            0.0
        };
        *ev = step_battery(ev, sign * share, dt_h, &deg);
    }
    result
}

/// Scenario-file description of a hub fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub ev_count: usize,
    #[serde(default = "default_capacity")]
    pub capacity_kwh: f64,
    #[serde(default = "default_soc_range")]
    pub soc_init_range: [f64; 2],
    #[serde(default = "default_soh")]
    pub soh_init: f64,
    #[serde(default = "default_eta")]
    pub eta_inv: f64,
    #[serde(default = "default_c_rate")]
    pub c_rate: f64,
    #[serde(default = "default_pack_voltage")]
    pub pack_voltage_v: f64,
    #[serde(default = "default_cycle")]
    pub cycle_coeff: f64,
    #[serde(default = "default_calendar")]
    pub calendar_coeff: f64,
    /// 24 hourly participation fractions; full participation if omitted.
    #[serde(default)]
    pub availability: Option<Vec<f64>>,
}

fn default_capacity() -> f64 {
    75.0
}
fn default_soc_range() -> [f64; 2] {
    [0.2, 0.9]
}
fn default_soh() -> f64 {
    0.95
}
fn default_eta() -> f64 {
    0.96
}
fn default_c_rate() -> f64 {
    0.5
}
fn default_pack_voltage() -> f64 {
    400.0
}
fn default_cycle() -> f64 {
    DegradationParams::default().cycle_coeff
}
fn default_calendar() -> f64 {
    DegradationParams::default().calendar_coeff
}

impl FleetConfig {
    /// Draws initial SOCs uniformly from `soc_init_range` and fixes the
    /// availability order, both from `seed`.
    pub fn build(&self, seed: u64) -> Result<FleetState, FleetError> {
        let [lo, hi] = self.soc_init_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(FleetError::Invalid(format!("bad soc_init_range {lo}..{hi}")));
        }
        let schedule = match &self.availability {
            Some(v) if v.len() != 24 => {
                return Err(FleetError::Invalid(format!(
                    "availability needs 24 hourly values, got {}",
                    v.len()
                )))
            }
            Some(v) => v.clone(),
            None => vec![1.0; 24],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let evs = (0..self.ev_count)
            .map(|_| EvUnit {
                capacity_kwh: self.capacity_kwh,
                soc: if hi > lo { rng.random_range(lo..=hi) } else { lo },
                soh: self.soh_init,
                c_rate_limit: self.c_rate,
                pack_voltage_v: self.pack_voltage_v,
                available: true,
            })
            .collect();
        FleetState::new(
            evs,
            self.eta_inv,
            schedule,
            DegradationParams {
                cycle_coeff: self.cycle_coeff,
                calendar_coeff: self.calendar_coeff,
            },
            rng.random(),
        )
    }
}
