use std::path::{Path, PathBuf};

use v2g_core::harness::{
    evaluate, hourly_csv, parse_table_violations, render_table, violation_hours_from_csv, write_report, Controller,
    HarnessError, ReportFile, RunManifest, Scenario,
};

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&path).expect("shipped scenario loads")
}

#[test]
fn csv_recount_matches_summary() {
    for name in ["single_hub_mild", "single_hub_aggressive", "multi_hub_mild"] {
        let s = scenario(name);
        for (controller, ev) in [(Controller::None, false), (Controller::Droop, false), (Controller::Droop, true)] {
            let r = evaluate(&s, &controller, ev, s.seed).unwrap();
            assert_eq!(violation_hours_from_csv(&hourly_csv(&r)), r.summary.violation_hours, "{name}");
            assert_eq!(r.hours.len(), 24);
        }
    }
}

#[test]
fn evaluation_is_deterministic() {
    let s = scenario("single_hub_mild");
    let a = evaluate(&s, &Controller::Droop, true, 3).unwrap();
    let b = evaluate(&s, &Controller::Droop, true, 3).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn baseline_ignores_fleet_flag() {
    let s = scenario("single_hub_mild");
    let a = evaluate(&s, &Controller::None, false, s.seed).unwrap();
    let b = evaluate(&s, &Controller::None, true, s.seed).unwrap();
    assert_eq!(a.summary, b.summary);
}

#[test]
fn coordinated_droop_clears_mild_day() {
    let s = scenario("multi_hub_mild");
    let base = evaluate(&s, &Controller::None, false, s.seed).unwrap();
    let droop = evaluate(&s, &Controller::Droop, false, s.seed).unwrap();
    assert!(base.summary.violation_hours > 0);
    assert!(droop.summary.violation_hours <= 1);
    assert!(droop.summary.min > base.summary.min);
}

#[test]
fn fleet_constrained_droop_respects_energy() {
    let s = scenario("single_hub_aggressive");
    let r = evaluate(&s, &Controller::Droop, true, s.seed).unwrap();
    for h in &r.hours {
        let soc = h.soc_mean.expect("fleet phase reports SOC");
        assert!((0.0..=1.0).contains(&soc));
        for hub in &h.hubs {
            assert!((0.0..=1.0).contains(&hub.rho));
        }
    }
}

#[test]
fn report_table_round_trips() {
    let s = scenario("single_hub_mild");
    let rows: Vec<_> = [(Controller::None, false), (Controller::Droop, false), (Controller::Droop, true)]
        .iter()
        .map(|(c, ev)| evaluate(&s, c, *ev, s.seed).unwrap())
        .collect();
    let table = render_table(&rows.iter().collect::<Vec<_>>());
    let parsed = parse_table_violations(&table);
    assert_eq!(parsed.len(), 3);
    for (r, (label, v)) in rows.iter().zip(&parsed) {
        assert_eq!(&r.label, label);
        assert_eq!(r.summary.violation_hours, *v);
    }
}

#[test]
fn report_rejects_mixed_feeders() {
    let a = scenario("single_hub_mild");
    let b = scenario("five_bus_train");
    let file = |s: &Scenario| ReportFile {
        manifest: RunManifest {
            scenario_hash: s.scenario_hash.clone(),
            feeder_hash: s.feeder_hash.clone(),
            checkpoint_hash: None,
            seed: s.seed,
            code_version: String::new(),
            started_at: String::new(),
            finished_at: String::new(),
        },
        body: evaluate(s, &Controller::None, false, s.seed).unwrap(),
    };
    let out = tempfile::tempdir().unwrap();
    let err = write_report(&[file(&a), file(&b)], out.path()).unwrap_err();
    assert!(matches!(err, HarnessError::Report(_)));
}
