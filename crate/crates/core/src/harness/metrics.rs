//! Day-level voltage statistics.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::V_MIN_PU;

/// Bus voltages of one hour; `converged = false` marks an unusable solve.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSnapshot {
    pub v_pu: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Mean over hours of the hourly bus-mean voltage.
    pub mean: f64,
    /// Extrema over hours of the hourly bus-mean voltage.
    pub min: f64,
    pub max: f64,
    /// Hours whose bus-mean voltage is below 0.95 p.u.
    pub violation_hours: usize,
    /// Hours left out because their solve did not converge.
    pub excluded_hours: Vec<usize>,
}

pub fn hourly_mean(v_pu: &[f64]) -> f64 {
    v_pu.iter().sum::<f64>() / v_pu.len() as f64
}

pub fn is_violation_hour(mean_v: f64) -> bool {
    mean_v < V_MIN_PU
}

pub fn compute_metrics(snapshots: &[VoltageSnapshot]) -> Result<MetricSummary, HarnessError> {
    let mut means = Vec::with_capacity(snapshots.len());
    let mut excluded = Vec::new();
    for (hour, s) in snapshots.iter().enumerate() {
        if s.converged && !s.v_pu.is_empty() {
            means.push(hourly_mean(&s.v_pu));
        } else {
            excluded.push(hour);
        }
    }
    if means.is_empty() {
        return Err(HarnessError::NoConvergedHours);
    }
    Ok(MetricSummary {
        mean: means.iter().sum::<f64>() / means.len() as f64,
        min: means.iter().copied().fold(f64::INFINITY, f64::min),
        max: means.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        violation_hours: means.iter().filter(|&&m| is_violation_hour(m)).count(),
        excluded_hours: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(v: f64) -> VoltageSnapshot {
        VoltageSnapshot {
            v_pu: vec![v; 3],
            converged: true,
        }
    }

    #[test]
    fn flat_day() {
        let m = compute_metrics(&vec![snap(1.0); 24]).unwrap();
        assert_eq!((m.mean, m.min, m.max, m.violation_hours), (1.0, 1.0, 1.0, 0));
    }

    #[test]
    fn one_low_hour() {
        let mut day = vec![snap(1.0); 24];
        day[7] = snap(0.94);
        let m = compute_metrics(&day).unwrap();
        assert_eq!(m.violation_hours, 1);
        assert!((m.min - 0.94).abs() < 1e-12);
    }

    #[test]
    fn alternating_hours_do_not_violate() {
        let day: Vec<_> = (0..24).map(|h| snap(if h % 2 == 0 { 0.96 } else { 1.04 })).collect();
        let m = compute_metrics(&day).unwrap();
        assert_eq!(m.violation_hours, 0);
        assert!((m.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_is_over_buses_then_hours() {
        let day = vec![VoltageSnapshot {
            v_pu: vec![1.0, 0.9],
            converged: true,
        }];
        let m = compute_metrics(&day).unwrap();
        assert!((m.mean - 0.95).abs() < 1e-12);
        assert_eq!(m.violation_hours, 0);
    }

    #[test]
    fn nonconverged_hours_are_excluded() {
        let mut day = vec![snap(1.0); 24];
        day[3] = VoltageSnapshot {
            v_pu: vec![0.1; 3],
            converged: false,
        };
        let m = compute_metrics(&day).unwrap();
        assert_eq!(m.excluded_hours, vec![3]);
        assert_eq!(m.min, 1.0);
        let none: Vec<_> = day
            .iter()
            .map(|s| VoltageSnapshot {
                converged: false,
                ..s.clone()
            })
            .collect();
        assert!(compute_metrics(&none).is_err());
    }
}
