//! Agent state, loss functions and the update step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::{Batch, ReplayBuffer};
use super::matrix::Matrix;
use super::nn::{Adam, DenseNet};
use super::policy::{GaussianPolicy, ACTION_BOUND};
use super::tape::Tape;
use super::SacError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Learn `alpha` toward `target_entropy`; otherwise keep `initial_alpha`.
    pub auto_alpha: bool,
    pub initial_alpha: f64,
    /// Defaults to `-act_dim` when absent.
    pub target_entropy: Option<f64>,
    pub warmup_steps: usize,
    /// Environment steps between update rounds.
    pub update_every: usize,
    /// Gradient steps per update round.
    pub updates_per_round: usize,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    /// Network inputs are `(v - obs_center) * obs_scale`.
    pub obs_center: f64,
    pub obs_scale: f64,
    /// Multiplies rewards inside the critic target.
    pub reward_scale: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch_size: 256,
            gamma: 0.99,
            tau: 5e-3,
            auto_alpha: true,
            initial_alpha: 1.0,
            target_entropy: None,
            warmup_steps: 1000,
            update_every: 1,
            updates_per_round: 1,
            hidden: vec![256, 256],
            buffer_capacity: 1_000_000,
            obs_center: 1.0,
            obs_scale: 20.0,
            reward_scale: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        let bad = |m: &str| Err(SacError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if !(self.initial_alpha > 0.0 && self.initial_alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if self.batch_size == 0 || self.update_every == 0 || self.buffer_capacity == 0 {
            return bad("batch_size, update_every and buffer_capacity must be >= 1");
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return bad("hidden widths must be >= 1");
        }
        if !(self.obs_scale.is_finite() && self.obs_scale != 0.0 && self.reward_scale > 0.0) {
            return bad("obs_scale must be non-zero and reward_scale > 0");
        }
        Ok(())
    }
}

/// A loss value and its gradient per parameter tensor.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grads: Vec<Matrix>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    /// `-mean log pi` of the actor's batch sample.
    pub entropy: f64,
}

fn critic_input(tape: &mut Tape, states: &Matrix, actions: &Matrix) -> super::tape::Var {
    tape.constant(states.hcat(actions))
}

/// Mean squared error of `q(s, a)` against fixed targets `y`.
pub fn critic_loss(q: &DenseNet, states: &Matrix, actions: &Matrix, targets: &Matrix) -> LossGrad {
    let mut tape = Tape::new();
    let x = critic_input(&mut tape, states, actions);
    let fwd = q.forward_tape(&mut tape, x, true);
    let y = tape.constant(targets.clone());
    let diff = tape.sub(fwd.output, y);
    let sq = tape.square(diff);
    let loss = tape.mean(sq);
    let grads = tape.backward(loss);
    LossGrad {
        value: tape.value(loss).get(0, 0),
        grads: q.collect_grads(&grads, &fwd.params),
    }
}

/// `mean(alpha * log pi(a|s) - min(q1, q2)(s, a))` with `a` reparameterized
/// by `eps`. Returns the loss, policy gradients and the mean log-prob.
pub fn actor_loss(
    policy: &GaussianPolicy,
    q1: &DenseNet,
    q2: &DenseNet,
    states: &Matrix,
    eps: &Matrix,
    alpha: f64,
) -> (LossGrad, f64) {
    let mut tape = Tape::new();
    let s = tape.constant(states.clone());
    let sample = policy.sample_tape(&mut tape, s, eps, true);
    let x = tape.hcat(s, sample.action);
    let q1v = q1.forward_tape(&mut tape, x, false).output;
    let q2v = q2.forward_tape(&mut tape, x, false).output;
    let q = tape.minimum(q1v, q2v);
    let ent = tape.scale(sample.log_prob, alpha);
    let per = tape.sub(ent, q);
    let loss = tape.mean(per);
    let grads = tape.backward(loss);
    let mean_log_prob = tape.value(sample.log_prob).mean();
    (
        LossGrad {
            value: tape.value(loss).get(0, 0),
            grads: policy.trunk.collect_grads(&grads, &sample.params),
        },
        mean_log_prob,
    )
}

/// `-log_alpha * (mean_log_prob + target_entropy)` and its derivative.
pub fn alpha_loss(log_alpha: f64, mean_log_prob: f64, target_entropy: f64) -> (f64, f64) {
    let mut tape = Tape::new();
    let la = tape.param(Matrix::filled(1, 1, log_alpha));
    let scaled = tape.scale(la, -(mean_log_prob + target_entropy));
    let loss = tape.mean(scaled);
    let g = tape.backward(loss).get(la, (1, 1)).get(0, 0);
    (tape.value(loss).get(0, 0), g)
}

/// Bootstrapped critic targets with `a'` reparameterized by `eps_next`.
#[allow(clippy::too_many_arguments)]
pub fn critic_targets(
    policy: &GaussianPolicy,
    q1_target: &DenseNet,
    q2_target: &DenseNet,
    batch: &Batch,
    eps_next: &Matrix,
    alpha: f64,
    gamma: f64,
    reward_scale: f64,
) -> Matrix {
    let (a_next, lp_next) = policy.sample_batch(&batch.next_states, eps_next);
    let x = batch.next_states.hcat(&a_next);
    let q1 = q1_target.forward(&x);
    let q2 = q2_target.forward(&x);
    let n = batch.len();
    let mut y = Matrix::zeros(n, 1);
    for i in 0..n {
        let soft = q1.get(i, 0).min(q2.get(i, 0)) - alpha * lp_next.get(i, 0);
        let boot = gamma * (1.0 - batch.dones.get(i, 0)) * soft;
        y.set(i, 0, reward_scale * batch.rewards.get(i, 0) + boot);
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub q1: DenseNet,
    pub q2: DenseNet,
    pub q1_target: DenseNet,
    pub q2_target: DenseNet,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = vec![obs_dim + act_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let q1 = DenseNet::new(&widths, rng);
        let q2 = DenseNet::new(&widths, rng);
        Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
        }
    }

    pub fn polyak(&mut self, tau: f64) {
        self.q1_target.polyak_from(&self.q1, tau);
        self.q2_target.polyak_from(&self.q2, tau);
    }
}

#[derive(Debug, Clone)]
pub struct Optimizers {
    policy: Adam,
    q1: Adam,
    q2: Adam,
    log_alpha: Adam,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    config: SacConfig,
    pub policy: GaussianPolicy,
    pub critics: CriticPair,
    log_alpha: f64,
    target_entropy: f64,
    opt: Optimizers,
    rng: ChaCha8Rng,
    updates: u64,
}

impl SacAgent {
    pub fn new(obs_dim: usize, act_dim: usize, config: SacConfig, seed: u64) -> Result<Self, SacError> {
        config.validate()?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(SacError::Config("observation and action widths must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(obs_dim, act_dim, &config.hidden, &mut rng);
        let critics = CriticPair::new(obs_dim, act_dim, &config.hidden, &mut rng);
        Ok(Self::assemble(config, policy, critics, None, rng))
    }

    fn assemble(
        config: SacConfig,
        policy: GaussianPolicy,
        critics: CriticPair,
        log_alpha: Option<f64>,
        rng: ChaCha8Rng,
    ) -> Self {
        let act_dim = policy.act_dim();
        let opt = Optimizers {
            policy: Adam::for_net(config.lr, &policy.trunk),
            q1: Adam::for_net(config.lr, &critics.q1),
            q2: Adam::for_net(config.lr, &critics.q2),
            log_alpha: Adam::new(config.lr, &[1]),
        };
        Self {
            target_entropy: config.target_entropy.unwrap_or(-(act_dim as f64)),
            log_alpha: log_alpha.unwrap_or(config.initial_alpha.ln()),
            config,
            policy,
            critics,
            opt,
            rng,
            updates: 0,
        }
    }

    /// Rebuilds an agent from stored networks; optimizer moments start fresh.
    pub fn from_parts(
        config: SacConfig,
        policy: GaussianPolicy,
        critics: CriticPair,
        log_alpha: f64,
        seed: u64,
    ) -> Result<Self, SacError> {
        config.validate()?;
        Ok(Self::assemble(config, policy, critics, Some(log_alpha), ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.policy.act_dim()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .map(|v| (v - self.config.obs_center) * self.config.obs_scale)
            .collect()
    }

    fn normalize_matrix(&self, raw: &Matrix) -> Matrix {
        let (c, s) = (self.config.obs_center, self.config.obs_scale);
        raw.map(|v| (v - c) * s)
    }

    /// `(action, log_prob)` for a raw observation.
    pub fn sample_action(&mut self, obs: &[f64], stochastic: bool) -> (Vec<f64>, f64) {
        let x = self.normalize(obs);
        self.policy.sample_action(&x, stochastic, &mut self.rng)
    }

    /// Deterministic evaluation action; uses no randomness.
    pub fn act_deterministic(&self, obs: &[f64]) -> Vec<f64> {
        let x = self.normalize(obs);
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        self.policy.sample_action(&x, false, &mut unused).0
    }

    /// Uniform action in `[-1, 1]^d` from the agent's stream.
    pub fn random_action(&mut self) -> Vec<f64> {
        (0..self.act_dim())
            .map(|_| self.rng.random_range(-ACTION_BOUND..=ACTION_BOUND))
            .collect()
    }

    fn noise(&mut self, rows: usize) -> Matrix {
        let d = self.act_dim();
        Matrix::from_vec(rows, d, (0..rows * d).map(|_| self.rng.sample(StandardNormal)).collect())
    }

    /// One gradient step on critics, actor and temperature, then target
    /// blending. Nothing is modified when a loss is non-finite.
    pub fn update(&mut self, buffer: &ReplayBuffer) -> Result<LossReport, SacError> {
        let n = self.config.batch_size;
        if buffer.len() < n {
            return Err(SacError::BufferUnderfilled {
                have: buffer.len(),
                need: n,
            });
        }
        let raw = buffer.sample(&mut self.rng, n);
        let batch = Batch {
            states: self.normalize_matrix(&raw.states),
            next_states: self.normalize_matrix(&raw.next_states),
            ..raw.clone()
        };
        let eps_next = self.noise(n);
        let eps = self.noise(n);
        let alpha = self.alpha();

        let y = critic_targets(
            &self.policy,
            &self.critics.q1_target,
            &self.critics.q2_target,
            &batch,
            &eps_next,
            alpha,
            self.config.gamma,
            self.config.reward_scale,
        );
        let l1 = critic_loss(&self.critics.q1, &batch.states, &batch.actions, &y);
        let l2 = critic_loss(&self.critics.q2, &batch.states, &batch.actions, &y);
        if !(l1.value.is_finite() && l2.value.is_finite()) {
            return Err(SacError::NonFiniteLoss {
                what: "critic",
                batch: Box::new(raw),
            });
        }

        // The actor sees the critics after this step's regression.
        let mut q1 = self.critics.q1.clone();
        let mut q2 = self.critics.q2.clone();
        let mut opt_q1 = self.opt.q1.clone();
        let mut opt_q2 = self.opt.q2.clone();
        opt_q1.step_net(&mut q1, &l1.grads);
        opt_q2.step_net(&mut q2, &l2.grads);

        let (la, mean_log_prob) = actor_loss(&self.policy, &q1, &q2, &batch.states, &eps, alpha);
        if !la.value.is_finite() {
            return Err(SacError::NonFiniteLoss {
                what: "actor",
                batch: Box::new(raw),
            });
        }
        let (alpha_value, alpha_grad) = alpha_loss(self.log_alpha, mean_log_prob, self.target_entropy);

        self.critics.q1 = q1;
        self.critics.q2 = q2;
        self.opt.q1 = opt_q1;
        self.opt.q2 = opt_q2;
        self.opt.policy.step_net(&mut self.policy.trunk, &la.grads);
        if self.config.auto_alpha {
            let mut la_slot = [self.log_alpha];
            self.opt.log_alpha.step(vec![&mut la_slot[..]], &[&[alpha_grad]]);
            self.log_alpha = la_slot[0];
        }
        self.critics.polyak(self.config.tau);
        self.updates += 1;

        Ok(LossReport {
            critic1: l1.value,
            critic2: l2.value,
            actor: la.value,
            alpha_loss: alpha_value,
            alpha: self.alpha(),
            entropy: -mean_log_prob,
        })
    }
}
