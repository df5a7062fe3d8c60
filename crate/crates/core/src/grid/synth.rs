//! Seeded random radial feeders for solver cross-checks.

use rand::Rng;

use super::feeder::{Bus, Feeder, Hub, Line, LoadPoint, Power};

/// Builds a random tree of `n_buses` buses rooted at bus `b0` on a
/// 12.47 kV / 1 MVA base. Every non-slack bus gets a random load and every
/// other bus a hub, plus a random hub injection within its limits.
pub fn random_radial_feeder<R: Rng + ?Sized>(rng: &mut R, n_buses: usize) -> (Feeder, Vec<Power>, Vec<Power>) {
    assert!(n_buses >= 2);
    let kv = 12.47;
    let z_base = kv * kv;
    let buses: Vec<Bus> = (0..n_buses)
        .map(|i| Bus {
            id: format!("b{i}"),
            base_kv: kv,
            is_slack: i == 0,
        })
        .collect();
    let lines: Vec<Line> = (1..n_buses)
        .map(|i| {
            let parent = rng.random_range(0..i);
            Line {
                from_bus: format!("b{parent}"),
                to_bus: format!("b{i}"),
                resistance_ohm: rng.random_range(0.002..0.03) * z_base,
                reactance_ohm: rng.random_range(0.002..0.03) * z_base,
            }
        })
        .collect();
    let loads: Vec<LoadPoint> = (1..n_buses)
        .map(|i| LoadPoint {
            bus: format!("b{i}"),
            p_base_kw: rng.random_range(0.0..300.0),
            q_base_kvar: rng.random_range(-50.0..150.0),
        })
        .collect();
    let hubs: Vec<Hub> = (1..n_buses)
        .step_by(2)
        .map(|i| Hub {
            bus: format!("b{i}"),
            p_max_kw: 200.0,
            q_max_kvar: 150.0,
        })
        .collect();
    let injections = hubs
        .iter()
        .map(|h| {
            Power::new(
                rng.random_range(-h.p_max_kw..h.p_max_kw),
                rng.random_range(-h.q_max_kvar..h.q_max_kvar),
            )
        })
        .collect();
    let source_pu = rng.random_range(0.98..1.05);
    let feeder = Feeder::new(buses, lines, loads, hubs, 1.0, source_pu)
        .expect("generated feeder is a valid tree");
    let lambda = rng.random_range(0.2..1.5);
    let demands = super::scale_loads(&feeder, lambda);
    (feeder, demands, injections)
}
