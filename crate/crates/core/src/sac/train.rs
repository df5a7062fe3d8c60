//! Training loop against the idealized environment.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{LossReport, SacAgent, SacConfig};
use super::buffer::{ReplayBuffer, Transition};
use super::checkpoint::Checkpoint;
use super::SacError;
use crate::env::{Action, EnvConfig, Phase, V2gEnv};
use crate::grid::Feeder;

/// Seeds for evaluation episodes start here so they never collide with
/// training episode seeds, which come from a separate stream.
const EVAL_SEED_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub total_steps: usize,
    pub seed: u64,
    /// Environment steps between evaluations; 0 disables them.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Environment steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    /// Directory receiving the offending batch if a loss goes non-finite.
    pub dump_dir: Option<PathBuf>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            total_steps: 0,
            seed: 0,
            eval_every: 0,
            eval_episodes: 5,
            checkpoint_every: 0,
            checkpoint_path: None,
            dump_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub losses: Option<LossReport>,
    pub eval: PolicyScore,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<TrainLogRow>,
    pub episodes: usize,
    pub updates: u64,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "step,critic1_loss,critic2_loss,actor_loss,alpha,entropy,eval_reward,eval_violation_rate\n",
        );
        for r in &self.rows {
            let l = r.losses.unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.step,
                l.critic1,
                l.critic2,
                l.actor,
                l.alpha,
                l.entropy,
                r.eval.mean_episode_reward,
                r.eval.violation_rate
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyScore {
    pub mean_episode_reward: f64,
    /// Fraction of steps with at least one bus outside the band.
    pub violation_rate: f64,
}

pub struct TrainOutcome {
    pub agent: SacAgent,
    pub log: TrainingLog,
}

/// Runs `episodes` full episodes seeded `seed, seed + 1, ...` under `policy`.
pub fn evaluate_policy(
    env: &mut V2gEnv,
    episodes: usize,
    seed: u64,
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
) -> Result<PolicyScore, SacError> {
    if episodes == 0 {
        return Ok(PolicyScore::default());
    }
    let mut total = 0.0;
    let (mut steps, mut violated) = (0usize, 0usize);
    for k in 0..episodes {
        let mut obs = env.reset(seed + k as u64)?;
        loop {
            let action = Action::new(policy(&obs.v_pu));
            let res = env.step(&action)?;
            total += res.reward;
            steps += 1;
            violated += usize::from(res.info.violations > 0);
            obs = res.observation;
            if res.done {
                break;
            }
        }
    }
    Ok(PolicyScore {
        mean_episode_reward: total / episodes as f64,
        violation_rate: violated as f64 / steps as f64,
    })
}

fn dump_batch(opts: &TrainOptions, step: usize, batch: &super::Batch) -> String {
    let Some(dir) = &opts.dump_dir else {
        return "<no dump dir>".into();
    };
    let path = dir.join(format!("nonfinite_batch_step{step}.json"));
    match serde_json::to_string(batch).map(|j| fs::write(&path, j)) {
        Ok(Ok(())) => path.display().to_string(),
        _ => format!("<failed to write {}>", path.display()),
    }
}

/// Trains an agent from scratch. Time-limit episode ends are stored as
/// non-terminal transitions.
pub fn train(
    feeder: Arc<Feeder>,
    env_config: EnvConfig,
    sac: SacConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome, SacError> {
    if env_config.phase != Phase::Idealized {
        return Err(SacError::Config("training requires the idealized phase".into()));
    }
    let mut env = V2gEnv::new(feeder.clone(), env_config.clone(), Vec::new())?;
    let mut eval_env = V2gEnv::new(feeder, env_config, Vec::new())?;
    let mut agent = SacAgent::new(env.observation_dim(), env.action_dim(), sac, opts.seed)?;
    let mut buffer = ReplayBuffer::new(agent.config().buffer_capacity);
    let mut episode_seeds = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log = TrainingLog::default();
    if opts.total_steps == 0 {
        return Ok(TrainOutcome { agent, log });
    }

    let cfg = agent.config().clone();
    let mut obs = env.reset(episode_seeds.random::<u64>() % EVAL_SEED_BASE)?;
    let mut last_losses = None;
    for step in 1..=opts.total_steps {
        let action = if step <= cfg.warmup_steps {
            agent.random_action()
        } else {
            agent.sample_action(&obs.v_pu, true).0
        };
        let res = env.step(&Action::new(action.clone()))?;
        buffer.push(Transition {
            state: obs.v_pu,
            action,
            reward: res.reward,
            next_state: res.observation.v_pu.clone(),
            done: false,
        });
        obs = if res.done {
            log.episodes += 1;
            env.reset(episode_seeds.random::<u64>() % EVAL_SEED_BASE)?
        } else {
            res.observation
        };

        if step > cfg.warmup_steps && buffer.len() >= cfg.batch_size && step % cfg.update_every == 0 {
            for _ in 0..cfg.updates_per_round {
                match agent.update(&buffer) {
                    Ok(r) => last_losses = Some(r),
                    Err(SacError::NonFiniteLoss { what, batch }) => {
                        let dump = dump_batch(opts, step, &batch);
                        return Err(SacError::Diverged { what, step, dump });
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        let eval_now = (opts.eval_every > 0 && step % opts.eval_every == 0) || step == opts.total_steps;
        if eval_now {
            let eval = evaluate_policy(&mut eval_env, opts.eval_episodes, EVAL_SEED_BASE, |o| {
                agent.act_deterministic(o)
            })?;
            log.rows.push(TrainLogRow {
                step,
                losses: last_losses,
                eval,
            });
        }
        if let Some(path) = &opts.checkpoint_path {
            let cadence = opts.checkpoint_every > 0 && step % opts.checkpoint_every == 0;
            if cadence || step == opts.total_steps {
                Checkpoint::from_agent(&agent, step).save(path)?;
            }
        }
    }
    log.updates = agent.updates();
    Ok(TrainOutcome { agent, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EpisodeMode, Resample};
    use crate::grid::load_feeder;

    const FEEDER: &str = "\
[buses]
s 12.47 slack
a 12.47 -
[lines]
s a 3.0 6.0
[loads]
a 800 300
[hubs]
a 500 400
";

    fn setup() -> (Arc<Feeder>, EnvConfig, SacConfig) {
        let env = EnvConfig {
            mode: EpisodeMode::Training {
                episode_len: 10,
                lambda_range: (0.5, 2.0),
                resample: Resample::PerStep,
            },
            ..EnvConfig::training()
        };
        let sac = SacConfig {
            batch_size: 16,
            hidden: vec![16, 16],
            warmup_steps: 20,
            ..SacConfig::default()
        };
        (Arc::new(load_feeder(FEEDER).unwrap()), env, sac)
    }

    #[test]
    fn zero_steps_returns_initial_policy() {
        let (feeder, env, sac) = setup();
        let out = train(feeder, env, sac.clone(), &TrainOptions::default()).unwrap();
        assert!(out.log.rows.is_empty());
        let fresh = SacAgent::new(2, 2, sac, 0).unwrap();
        assert_eq!(out.agent.policy, fresh.policy);
    }

    #[test]
    fn short_run_is_deterministic_and_checkpoints() {
        let (feeder, env, sac) = setup();
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            total_steps: 60,
            seed: 5,
            eval_every: 30,
            eval_episodes: 2,
            checkpoint_every: 30,
            checkpoint_path: Some(dir.path().join("c.json")),
            dump_dir: None,
        };
        let a = train(feeder.clone(), env.clone(), sac.clone(), &opts).unwrap();
        let b = train(feeder, env, sac, &opts).unwrap();
        assert_eq!(a.agent.policy, b.agent.policy);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.rows.len(), 2);
        assert_eq!(a.log.episodes, 6);
        assert!(a.log.updates > 0);
        assert_eq!(a.log.to_csv().lines().count(), 3);
        let ckpt = Checkpoint::load(&dir.path().join("c.json")).unwrap();
        assert_eq!(ckpt.env_steps, 60);
        assert_eq!(ckpt.policy, a.agent.policy);
    }

    #[test]
    fn fleet_phase_is_rejected() {
        let (feeder, mut env, sac) = setup();
        env.phase = Phase::FleetConstrained;
        let opts = TrainOptions {
            total_steps: 1,
            ..TrainOptions::default()
        };
        assert!(matches!(train(feeder, env, sac, &opts), Err(SacError::Config(_))));
    }
}
