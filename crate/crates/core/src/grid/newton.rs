//! Full-Newton polar power flow over the bus admittance matrix.
//!
//! Kept as an independent reference for the sweep solver: it shares no
//! iteration code with [`super::sweep`], only the feeder data and the
//! net-demand conversion.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::feeder::{Feeder, Power};
use super::sweep::{net_demand_pu, PowerFlowSolution};

fn admittance_matrix(feeder: &Feeder) -> Vec<Vec<Complex64>> {
    let n = feeder.bus_count();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for c in 0..n {
        if let (Some(p), Some(z)) = (feeder.parent_of(c), feeder.branch_impedance_pu(c)) {
            let yl = z.inv();
            y[p][p] += yl;
            y[c][c] += yl;
            y[p][c] -= yl;
            y[c][p] -= yl;
        }
    }
    y
}

/// Solves the same power flow as [`super::solve_power_flow`] by Newton's
/// method, to `tolerance_pu` on the max mismatch.
pub fn solve_newton_raphson(
    feeder: &Feeder,
    demands: &[Power],
    hub_injections: &[Power],
    tolerance_pu: f64,
    max_iterations: usize,
) -> PowerFlowSolution {
    let n = feeder.bus_count();
    let slack = feeder.slack_index();
    let y = admittance_matrix(feeder);
    // Specified injections are the negated net demand.
    let s_spec: Vec<Complex64> = net_demand_pu(feeder, demands, hub_injections)
        .into_iter()
        .map(|s| -s)
        .collect();
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();

    let mut vm = vec![feeder.source_pu(); n];
    let mut va = vec![0.0; n];
    let mut iterations = 0;
    let mut mismatch;

    loop {
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
        let ibus: Vec<Complex64> = (0..n)
            .map(|i| (0..n).map(|k| y[i][k] * v[k]).sum())
            .collect();
        let f: Vec<Complex64> = pq.iter().map(|&i| v[i] * ibus[i].conj() - s_spec[i]).collect();
        mismatch = f.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if mismatch <= tolerance_pu || iterations >= max_iterations || !mismatch.is_finite() {
            break;
        }
        iterations += 1;

        let mut jac = DMatrix::<f64>::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let vn_k = v[k] / vm[k];
                // dS_i/dVa_k and dS_i/dVm_k.
                let mut ds_dva = -Complex64::i() * v[i] * (y[i][k] * v[k]).conj();
                let mut ds_dvm = v[i] * (y[i][k] * vn_k).conj();
                if i == k {
                    ds_dva += Complex64::i() * v[i] * ibus[i].conj();
                    ds_dvm += ibus[i].conj() * vn_k;
                }
                jac[(r, c)] = ds_dva.re;
                jac[(r, m + c)] = ds_dvm.re;
                jac[(m + r, c)] = ds_dva.im;
                jac[(m + r, m + c)] = ds_dvm.im;
            }
        }
        let rhs = DVector::from_iterator(
            2 * m,
            f.iter().map(|x| -x.re).chain(f.iter().map(|x| -x.im)),
        );
        let Some(dx) = jac.lu().solve(&rhs) else {
            mismatch = f64::INFINITY;
            break;
        };
        for (r, &i) in pq.iter().enumerate() {
            va[i] += dx[r];
            vm[i] += dx[m + r];
        }
    }

    PowerFlowSolution {
        v_pu: vm,
        angle_rad: va,
        converged: mismatch <= tolerance_pu,
        iterations,
        max_mismatch_pu: mismatch,
    }
}
