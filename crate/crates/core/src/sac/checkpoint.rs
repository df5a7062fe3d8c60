//! Versioned JSON checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::agent::{CriticPair, SacAgent, SacConfig};
use super::policy::GaussianPolicy;
use super::SacError;

pub const CHECKPOINT_FORMAT: &str = "v2g-sac-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hex SHA-256 of the canonical JSON encoding of `config`.
pub fn config_hash(config: &SacConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub policy_widths: Vec<usize>,
    pub critic_widths: Vec<usize>,
    pub config: SacConfig,
    pub config_hash: String,
    /// Environment steps taken when the checkpoint was written.
    pub env_steps: usize,
    pub log_alpha: f64,
    pub policy: GaussianPolicy,
    pub critics: CriticPair,
}

impl Checkpoint {
    pub fn from_agent(agent: &SacAgent, env_steps: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            obs_dim: agent.obs_dim(),
            act_dim: agent.act_dim(),
            policy_widths: agent.policy.trunk.widths(),
            critic_widths: agent.critics.q1.widths(),
            config: agent.config().clone(),
            config_hash: config_hash(agent.config()),
            env_steps,
            log_alpha: agent.log_alpha(),
            policy: agent.policy.clone(),
            critics: agent.critics.clone(),
        }
    }

    fn validate(&self) -> Result<(), SacError> {
        let bad = |m: String| Err(SacError::Checkpoint(m));
        if self.format != CHECKPOINT_FORMAT {
            return bad(format!("unexpected format `{}`", self.format));
        }
        if self.version != CHECKPOINT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if config_hash(&self.config) != self.config_hash {
            return bad("config hash does not match the stored config".into());
        }
        let pw = self.policy.trunk.widths();
        if pw != self.policy_widths || pw[0] != self.obs_dim || *pw.last().unwrap() != 2 * self.act_dim {
            return bad(format!("policy shape {pw:?} disagrees with the header"));
        }
        for net in [
            &self.critics.q1,
            &self.critics.q2,
            &self.critics.q1_target,
            &self.critics.q2_target,
        ] {
            if net.widths() != self.critic_widths || self.critic_widths[0] != self.obs_dim + self.act_dim {
                return bad(format!("critic shape {:?} disagrees with the header", net.widths()));
            }
        }
        let finite = [
            &self.policy.trunk,
            &self.critics.q1,
            &self.critics.q2,
            &self.critics.q1_target,
            &self.critics.q2_target,
        ]
        .iter()
        .all(|n| n.all_finite());
        if !finite || !self.log_alpha.is_finite() {
            return bad("non-finite parameters".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SacError> {
        let ckpt: Self =
            serde_json::from_str(text).map_err(|e| SacError::Checkpoint(format!("malformed: {e}")))?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), SacError> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_json()).map_err(|e| SacError::Io(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, path).map_err(|e| SacError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, SacError> {
        let text =
            fs::read_to_string(path).map_err(|e| SacError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn into_agent(self, seed: u64) -> Result<SacAgent, SacError> {
        SacAgent::from_parts(self.config, self.policy, self.critics, self.log_alpha, seed)
    }
}
