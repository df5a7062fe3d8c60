//! Experiment orchestration: scenarios, evaluation runs, metrics, reports.

mod evaluate;
mod metrics;
mod report;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub use evaluate::{
    evaluate, row_label, scenario_fleets, Controller, ControllerKind, HourRecord, HubRecord, ScenarioReport,
    VoltageStats,
};
pub use metrics::{compute_metrics, hourly_mean, is_violation_hour, MetricSummary, VoltageSnapshot};
pub use report::{
    hourly_csv, parse_table_violations, render_table, violation_hours_from_csv, write_report, ReportFile,
    ReportOutput, RunManifest, TABLE_HEADER,
};
pub use scenario::{ProfileSpec, Scenario, TrainingSpec};

use crate::droop::DroopError;
use crate::env::EnvError;
use crate::fleet::FleetError;
use crate::grid::FeederError;
use crate::sac::{train, Checkpoint, SacError, TrainOptions, TrainOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("feeder: {0}")]
    Feeder(#[from] FeederError),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("fleet: {0}")]
    Fleet(#[from] FleetError),
    #[error(transparent)]
    Droop(#[from] DroopError),
    #[error("agent: {0}")]
    Sac(#[from] SacError),
    #[error("checkpoint does not fit the scenario: {0}")]
    CheckpointMismatch(String),
    #[error("no hour of the day produced a converged power flow")]
    NoConvergedHours,
    #[error("report: {0}")]
    Report(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "io",
            HarnessError::Scenario(_) => "scenario",
            HarnessError::Feeder(_) => "feeder",
            HarnessError::Env(_) => "environment",
            HarnessError::Fleet(_) => "fleet",
            HarnessError::Droop(_) => "droop",
            HarnessError::Sac(_) => "agent",
            HarnessError::CheckpointMismatch(_) => "checkpoint_mismatch",
            HarnessError::NoConvergedHours => "no_converged_hours",
            HarnessError::Report(_) => "report",
            HarnessError::Usage(_) => "usage",
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}

/// Trains on the scenario's idealized training environment and writes the
/// final checkpoint to `out` and the training log next to it.
pub fn train_scenario(
    scenario: &Scenario,
    steps: Option<usize>,
    seed: u64,
    out: &Path,
) -> Result<TrainOutcome, HarnessError> {
    let t = &scenario.training;
    let opts = TrainOptions {
        total_steps: steps.unwrap_or(t.steps),
        seed,
        eval_every: t.eval_every,
        eval_episodes: t.eval_episodes,
        checkpoint_every: t.checkpoint_every,
        checkpoint_path: Some(out.to_path_buf()),
        dump_dir: out.parent().map(Path::to_path_buf),
    };
    let outcome = train(scenario.feeder.clone(), scenario.training_env()?, scenario.sac.clone(), &opts)?;
    if opts.total_steps == 0 {
        Checkpoint::from_agent(&outcome.agent, 0).save(out)?;
    }
    let log_path = training_log_path(out);
    fs::write(&log_path, outcome.log.to_csv()).map_err(|e| HarnessError::io(&log_path, e))?;
    Ok(outcome)
}

pub fn training_log_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".log.csv");
    checkpoint.with_file_name(name)
}

/// Loads a checkpoint as an evaluation controller together with its hash.
pub fn load_rl_controller(path: &Path) -> Result<(Controller, String), HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| HarnessError::Sac(SacError::Checkpoint("not UTF-8".into())))?;
    let agent = Checkpoint::from_json(&text)?.into_agent(0)?;
    Ok((Controller::Rl(Box::new(agent)), sha256_hex(&bytes)))
}

/// One evaluation with its manifest. `checkpoint` is required for `rl`.
pub fn run_evaluation(
    scenario: &Scenario,
    kind: ControllerKind,
    ev_constrained: bool,
    checkpoint: Option<&Path>,
    seed: u64,
) -> Result<ReportFile, HarnessError> {
    let started_at = now();
    let (controller, checkpoint_hash) = match (kind, checkpoint) {
        (ControllerKind::Rl, Some(path)) => {
            let (c, h) = load_rl_controller(path)?;
            (c, Some(h))
        }
        (ControllerKind::Rl, None) => {
            return Err(HarnessError::Usage("the rl controller needs --checkpoint".into()))
        }
        (ControllerKind::None, _) => (Controller::None, None),
        (ControllerKind::Droop, _) => (Controller::Droop, None),
    };
    let body = evaluate(scenario, &controller, ev_constrained, seed)?;
    Ok(ReportFile {
        manifest: RunManifest {
            scenario_hash: scenario.scenario_hash.clone(),
            feeder_hash: scenario.feeder_hash.clone(),
            checkpoint_hash,
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at: now(),
        },
        body,
    })
}
