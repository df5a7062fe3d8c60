//! Scenario files: feeder, hub selection, load profile, fleet, controllers.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, HarnessError};
use crate::droop::DroopConfig;
use crate::env::{
    DailyProfile, EnvConfig, EpisodeMode, Phase, ProfileKind, Resample, DEFAULT_NONCONVERGENCE_PENALTY,
};
use crate::fleet::FleetConfig;
use crate::grid::{load_feeder, Feeder};
use crate::sac::SacConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(ProfileKind),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSpec {
    pub steps: usize,
    pub episode_len: usize,
    pub lambda_range: [f64; 2],
    pub resample: Resample,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub checkpoint_every: usize,
    pub nonconvergence_penalty: f64,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            steps: 20_000,
            episode_len: 24,
            lambda_range: [0.3, 2.0],
            resample: Resample::PerStep,
            eval_every: 2_000,
            eval_episodes: 5,
            checkpoint_every: 0,
            nonconvergence_penalty: DEFAULT_NONCONVERGENCE_PENALTY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    /// Relative to the scenario file.
    feeder: String,
    /// Subset of the feeder's hubs; all of them when omitted.
    hubs: Option<Vec<String>>,
    profile: ProfileSpec,
    #[serde(default)]
    seed: u64,
    v2g_window: Option<[usize; 2]>,
    fleet: Option<FleetConfig>,
    #[serde(default)]
    droop: DroopConfig,
    #[serde(default)]
    training: TrainingSpec,
    #[serde(default)]
    sac: SacConfig,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub feeder: Arc<Feeder>,
    pub feeder_name: String,
    pub feeder_hash: String,
    pub scenario_hash: String,
    pub profile: DailyProfile,
    pub profile_label: String,
    pub seed: u64,
    pub v2g_window: (usize, usize),
    pub fleet: Option<FleetConfig>,
    pub droop: DroopConfig,
    pub training: TrainingSpec,
    pub sac: SacConfig,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        Self::parse(&text, &base, stem)
    }

    /// Parses scenario TOML; `base_dir` anchors the feeder path.
    pub fn parse(text: &str, base_dir: &Path, default_name: Option<String>) -> Result<Self, HarnessError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        let feeder_path: PathBuf = base_dir.join(&file.feeder);
        let feeder_text =
            fs::read_to_string(&feeder_path).map_err(|e| HarnessError::io(&feeder_path, e))?;
        let full = load_feeder(&feeder_text)?;
        let feeder = match &file.hubs {
            Some(h) if h.is_empty() => {
                return Err(HarnessError::Scenario("`hubs` must name at least one hub".into()))
            }
            Some(h) => full.with_hubs(h)?,
            None => full,
        };
        let (profile, profile_label) = match &file.profile {
            ProfileSpec::Named(kind) => (DailyProfile::builtin(*kind), kind.to_string()),
            ProfileSpec::Values(v) => (DailyProfile::from_values(v.clone())?, "custom".to_string()),
        };
        if let Some(f) = &file.fleet {
            f.build(0)?;
        }
        file.droop.volt_var.validate()?;
        file.droop.volt_watt.validate()?;
        file.sac.validate()?;
        let [lo, hi] = file.training.lambda_range;
        let window = file.v2g_window.map_or((6, 23), |[a, b]| (a, b));
        let scenario = Self {
            name: file.name.or(default_name).unwrap_or_else(|| "scenario".into()),
            feeder: Arc::new(feeder),
            feeder_name: feeder_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            feeder_hash: sha256_hex(feeder_text.as_bytes()),
            scenario_hash: sha256_hex(text.as_bytes()),
            profile,
            profile_label,
            seed: file.seed,
            v2g_window: window,
            fleet: file.fleet,
            droop: file.droop,
            training: file.training,
            sac: file.sac,
        };
        scenario.training_env()?.validate()?;
        scenario.evaluation_env(Phase::Idealized).validate()?;
        if !(lo <= hi) {
            return Err(HarnessError::Scenario("lambda_range must be ordered".into()));
        }
        Ok(scenario)
    }

    pub fn hub_ids(&self) -> Vec<String> {
        self.feeder.hubs().iter().map(|h| h.bus.clone()).collect()
    }

    pub fn is_multi_hub(&self) -> bool {
        self.feeder.hubs().len() > 1
    }

    pub fn training_env(&self) -> Result<EnvConfig, HarnessError> {
        let t = &self.training;
        Ok(EnvConfig {
            phase: Phase::Idealized,
            mode: EpisodeMode::Training {
                episode_len: t.episode_len,
                lambda_range: (t.lambda_range[0], t.lambda_range[1]),
                resample: t.resample,
            },
            v2g_window: self.v2g_window,
            nonconvergence_penalty: t.nonconvergence_penalty,
            ..EnvConfig::training()
        })
    }

    pub fn evaluation_env(&self, phase: Phase) -> EnvConfig {
        EnvConfig {
            v2g_window: self.v2g_window,
            nonconvergence_penalty: self.training.nonconvergence_penalty,
            ..EnvConfig::evaluation(self.profile.clone(), phase)
        }
    }
}
