//! Decentralised Volt-Var / Volt-Watt droop baseline.
//!
//! Each hub maps its own bus voltage to normalised P and Q outputs through a
//! piecewise-linear curve: zero inside the deadband around 1.0 p.u., a single
//! linear ramp out to the saturation voltage, and full output beyond it.
//! Positive output injects into the grid (undervoltage support).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Hub, Power, PowerFlowSolution};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid droop curve: {0}")]
pub struct DroopError(String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroopCurve {
    pub deadband_pu: f64,
    pub v_sat_low_pu: f64,
    pub v_sat_high_pu: f64,
    /// Magnitude of the normalised output at saturation.
    #[serde(default = "one")]
    pub output_max: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DroopCurve {
    fn default() -> Self {
        Self {
            deadband_pu: 0.02,
            v_sat_low_pu: 0.90,
            v_sat_high_pu: 1.10,
            output_max: 1.0,
        }
    }
}

impl DroopCurve {
    pub fn validate(&self) -> Result<(), DroopError> {
        let ok = self.v_sat_low_pu < 1.0
            && 1.0 < self.v_sat_high_pu
            && self.deadband_pu > 0.0
            && self.deadband_pu < 1.0 - self.v_sat_low_pu
            && self.deadband_pu < self.v_sat_high_pu - 1.0
            && self.output_max > 0.0
            && self.output_max <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(DroopError(format!("{self:?}")))
        }
    }

    fn evaluate(&self, v_pu: f64) -> f64 {
        let low_edge = 1.0 - self.deadband_pu;
        let high_edge = 1.0 + self.deadband_pu;
        let frac = if v_pu < low_edge {
            ((low_edge - v_pu) / (low_edge - self.v_sat_low_pu)).min(1.0)
        } else if v_pu > high_edge {
            -((v_pu - high_edge) / (self.v_sat_high_pu - high_edge)).min(1.0)
        } else {
            0.0
        };
        frac * self.output_max
    }
}

/// Normalised reactive output for a measured voltage.
pub fn volt_var(curve: &DroopCurve, v_pu: f64) -> f64 {
    curve.evaluate(v_pu)
}

/// Normalised active output; same geometry as [`volt_var`].
pub fn volt_watt(curve: &DroopCurve, v_pu: f64) -> f64 {
    curve.evaluate(v_pu)
}

/// Droop settings for a whole run: one curve each for P and Q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroopConfig {
    #[serde(default)]
    pub volt_var: DroopCurve,
    #[serde(default)]
    pub volt_watt: DroopCurve,
    /// Iterate setpoint and voltage to a fixed point instead of the single
    /// re-solve.
    #[serde(default)]
    pub fixed_point: bool,
}

impl Default for DroopConfig {
    fn default() -> Self {
        Self {
            volt_var: DroopCurve::default(),
            volt_watt: DroopCurve::default(),
            fixed_point: false,
        }
    }
}

impl DroopConfig {
    /// Normalised `[a_P, a_Q]` factors for one hub from its bus voltage.
    pub fn factors(&self, v_pu: f64) -> [f64; 2] {
        [volt_watt(&self.volt_watt, v_pu), volt_var(&self.volt_var, v_pu)]
    }

    /// Normalised action vector `[a_P1, a_Q1, a_P2, ...]` for hubs whose bus
    /// indices are `hub_buses`.
    pub fn action(&self, hub_buses: &[usize], solution: &PowerFlowSolution) -> Vec<f64> {
        hub_buses
            .iter()
            .flat_map(|&b| self.factors(solution.v_pu[b]))
            .collect()
    }
}

/// Per-hub kW/kvar setpoints: each hub reads only its own bus voltage.
pub fn droop_control(
    config: &DroopConfig,
    hubs: &[Hub],
    hub_buses: &[usize],
    solution: &PowerFlowSolution,
) -> Vec<Power> {
    hubs.iter()
        .zip(hub_buses)
        .map(|(hub, &bus)| {
            let [p, q] = config.factors(solution.v_pu[bus]);
            Power::new(p * hub.p_max_kw, q * hub.q_max_kvar)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn volt_var_points() {
        let c = DroopCurve::default();
        assert_eq!(volt_var(&c, 1.0), 0.0);
        assert!(close(volt_var(&c, 0.90), 1.0));
        assert!(close(volt_var(&c, 0.94), 0.5));
        assert!(close(volt_var(&c, 1.10), -1.0));
    }

    #[test]
    fn volt_watt_points() {
        let c = DroopCurve::default();
        assert_eq!(volt_watt(&c, 1.015), 0.0);
        assert_eq!(volt_watt(&c, 0.86), 1.0);
        assert!(close(volt_watt(&c, 1.06), -0.5));
    }

    #[test]
    fn curve_validation() {
        assert!(DroopCurve::default().validate().is_ok());
        let bad = DroopCurve {
            deadband_pu: 0.15,
            ..DroopCurve::default()
        };
        assert!(bad.validate().is_err());
    }

    fn solution(v: Vec<f64>) -> PowerFlowSolution {
        let n = v.len();
        PowerFlowSolution {
            v_pu: v,
            angle_rad: vec![0.0; n],
            converged: true,
            iterations: 1,
            max_mismatch_pu: 0.0,
        }
    }

    fn hub(bus: &str) -> Hub {
        Hub {
            bus: bus.into(),
            p_max_kw: 500.0,
            q_max_kvar: 400.0,
        }
    }

    #[test]
    fn setpoints_follow_local_voltage() {
        let cfg = DroopConfig::default();
        let hubs = [hub("a"), hub("b")];
        let flat = droop_control(&cfg, &hubs, &[1, 2], &solution(vec![1.0; 3]));
        assert_eq!(flat, vec![Power::ZERO; 2]);
        let sag = droop_control(&cfg, &hubs[..1], &[1], &solution(vec![1.0, 0.90, 1.0]));
        assert!(close(sag[0].p_kw, 500.0) && close(sag[0].q_kvar, 400.0));

        // Swapping the hub-to-bus map swaps the outputs and nothing else.
        let sol = solution(vec![1.0, 0.93, 1.07]);
        let ab = droop_control(&cfg, &hubs, &[1, 2], &sol);
        let ba = droop_control(&cfg, &hubs, &[2, 1], &sol);
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
    }

    #[test]
    fn continuous_on_dense_grid() {
        let c = DroopCurve::default();
        let step = 1e-6;
        let mut prev = volt_var(&c, 0.8);
        let mut v = 0.8;
        while v < 1.2 {
            v += step;
            let cur = volt_var(&c, v);
            // Slope is at most 1 / 0.08 per p.u.
            assert!((cur - prev).abs() <= step / 0.08 + 1e-12, "jump at {v}");
            prev = cur;
        }
    }

    proptest! {
        #[test]
        fn odd_symmetry_and_range(d in 0.0f64..0.3, v in 0.5f64..1.5) {
            let c = DroopCurve::default();
            prop_assert!((volt_var(&c, 1.0 + d) + volt_var(&c, 1.0 - d)).abs() < 1e-12);
            let out = volt_watt(&c, v);
            prop_assert!((-1.0..=1.0).contains(&out));
        }

        #[test]
        fn locality(vs in proptest::collection::vec(0.85f64..1.15, 4), other in 0.85f64..1.15) {
            let cfg = DroopConfig::default();
            let hubs = [hub("a"), hub("b")];
            let before = droop_control(&cfg, &hubs, &[0, 2], &solution(vs.clone()));
            let mut changed = vs.clone();
            changed[1] = other;
            changed[3] = other;
            let after = droop_control(&cfg, &hubs, &[0, 2], &solution(changed));
            prop_assert_eq!(before, after);
        }
    }
}
