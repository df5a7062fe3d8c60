//! Backward/forward sweep power flow for radial feeders.

use num_complex::Complex64;

use super::feeder::{Feeder, Power};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Convergence threshold on the largest complex power mismatch, p.u.
    pub tolerance_pu: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance_pu: 1e-8,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v_pu: Vec<f64>,
    pub angle_rad: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
}

impl PowerFlowSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.v_pu
            .iter()
            .zip(&self.angle_rad)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub fn min_v(&self) -> f64 {
        self.v_pu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_v(&self) -> f64 {
        self.v_pu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_v(&self) -> f64 {
        self.v_pu.iter().sum::<f64>() / self.v_pu.len() as f64
    }
}

/// Net complex power consumed at every bus, in p.u.: load demand minus hub
/// injection. Positive hub P injects into the grid.
pub fn net_demand_pu(feeder: &Feeder, demands: &[Power], hub_injections: &[Power]) -> Vec<Complex64> {
    assert_eq!(demands.len(), feeder.bus_count(), "one demand per bus");
    assert_eq!(hub_injections.len(), feeder.hubs().len(), "one injection per hub");
    let scale = 1.0 / (1000.0 * feeder.base_mva());
    let mut s: Vec<Complex64> = demands
        .iter()
        .map(|d| Complex64::new(d.p_kw, d.q_kvar) * scale)
        .collect();
    for (inj, &bus) in hub_injections.iter().zip(feeder.hub_bus_indices()) {
        s[bus] -= Complex64::new(inj.p_kw, inj.q_kvar) * scale;
    }
    s
}

/// Largest complex power mismatch over non-slack buses for a set of bus
/// voltages. Branch currents come from the voltage drop across each line, so
/// this is the true network residual, independent of how `v` was obtained.
pub fn power_mismatch(feeder: &Feeder, v: &[Complex64], s_net: &[Complex64]) -> f64 {
    let topo = &feeder.topology;
    let n = feeder.bus_count();
    let mut inflow = vec![Complex64::new(0.0, 0.0); n];
    for bus in 0..n {
        if let Some(p) = topo.parent[bus] {
            inflow[bus] = (v[p] - v[bus]) / topo.z_parent[bus];
        }
    }
    let mut worst: f64 = 0.0;
    for bus in 0..n {
        if topo.parent[bus].is_none() {
            continue;
        }
        let mut consumed = inflow[bus];
        for &c in &topo.children[bus] {
            consumed -= inflow[c];
        }
        let s_calc = v[bus] * consumed.conj();
        let err = (s_calc - s_net[bus]).norm();
        if err.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}

/// Solves the balanced power flow with default options.
pub fn solve_power_flow(
    feeder: &Feeder,
    demands: &[Power],
    hub_injections: &[Power],
) -> PowerFlowSolution {
    solve_power_flow_with(feeder, demands, hub_injections, &SolverOptions::default())
}

/// Current-summation backward/forward sweep from a flat start.
pub fn solve_power_flow_with(
    feeder: &Feeder,
    demands: &[Power],
    hub_injections: &[Power],
    options: &SolverOptions,
) -> PowerFlowSolution {
    let topo = &feeder.topology;
    let n = feeder.bus_count();
    let slack = feeder.slack_index();
    let v_src = feeder.source_pu();
    let s_net = net_demand_pu(feeder, demands, hub_injections);

    let mut v = vec![Complex64::new(v_src, 0.0); n];
    let mut branch = vec![Complex64::new(0.0, 0.0); n];
    let mut mismatch = power_mismatch(feeder, &v, &s_net);
    let mut iterations = 0;

    while mismatch > options.tolerance_pu && iterations < options.max_iterations {
        iterations += 1;
        // Backward: accumulate load currents toward the root.
        for &bus in topo.order.iter().rev() {
            let mut current = (s_net[bus] / v[bus]).conj();
            for &c in &topo.children[bus] {
                current += branch[c];
            }
            branch[bus] = current;
        }
        // Forward: propagate voltage drops away from the root.
        for &bus in topo.order.iter().skip(1) {
            let p = topo.parent[bus].expect("non-root bus has a parent");
            v[bus] = v[p] - topo.z_parent[bus] * branch[bus];
        }
        mismatch = power_mismatch(feeder, &v, &s_net);
        if !mismatch.is_finite() || v.iter().any(|x| x.norm() < 1e-6) {
            mismatch = f64::INFINITY;
            break;
        }
    }

    let mut v_pu: Vec<f64> = v.iter().map(|x| x.norm()).collect();
    let mut angle_rad: Vec<f64> = v.iter().map(|x| x.arg()).collect();
    v_pu[slack] = v_src;
    angle_rad[slack] = 0.0;
    PowerFlowSolution {
        v_pu,
        angle_rad,
        converged: mismatch <= options.tolerance_pu,
        iterations,
        max_mismatch_pu: mismatch,
    }
}
