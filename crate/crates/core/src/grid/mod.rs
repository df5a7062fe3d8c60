//! Radial feeder model and steady-state power flow.

mod feeder;
pub mod newton;
mod sweep;
pub mod synth;

pub use feeder::{
    clamp_hub_setpoint, load_feeder, scale_loads, Bus, Feeder, FeederError, Hub, Line, LoadPoint,
    Power,
};
pub use sweep::{
    net_demand_pu, power_mismatch, solve_power_flow, solve_power_flow_with, PowerFlowSolution,
    SolverOptions,
};
