//! Vehicle-to-grid voltage regulation on radial distribution feeders.
//!
//! The crate bundles a balanced radial power-flow solver, an EV fleet model
//! that turns hub-level requests into feasible battery power, a Volt-Var /
//! Volt-Watt droop baseline, an MDP environment around all of it, a
//! from-scratch Soft Actor-Critic agent and the experiment harness that
//! produces the comparison tables.

pub mod droop;
pub mod env;
pub mod fleet;
pub mod grid;
pub mod harness;
pub mod sac;
