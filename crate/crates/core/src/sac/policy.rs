//! Tanh-squashed Gaussian policy.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::nn::DenseNet;
use super::tape::{Tape, Var};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Largest magnitude of an emitted action; keeps rounded `tanh` strictly
/// inside the open interval.
pub const ACTION_BOUND: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    /// Emits `[mean | log_std]`, each `act_dim` wide.
    pub trunk: DenseNet,
}

/// Tape handles of a reparameterized sample.
pub struct PolicyTape {
    /// `n x act_dim`, squashed.
    pub action: Var,
    /// `n x 1`.
    pub log_prob: Var,
    pub params: Vec<Var>,
}

/// `ln N(eps; 0, 1)` summed over a row, without the `log_std` term.
fn standard_log_density(eps: &[f64]) -> f64 {
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    eps.iter().map(|e| -0.5 * e * e - half_ln_2pi).sum()
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(2 * act_dim);
        Self {
            trunk: DenseNet::new(&widths, rng),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_width()
    }

    pub fn act_dim(&self) -> usize {
        self.trunk.output_width() / 2
    }

    /// Records `a = tanh(mean + std * eps)` and its log-density. A zero
    /// `eps` gives the deterministic action `tanh(mean)`.
    pub fn sample_tape(&self, tape: &mut Tape, states: Var, eps: &Matrix, trainable: bool) -> PolicyTape {
        let d = self.act_dim();
        assert_eq!(eps.shape(), (tape.value(states).rows(), d), "noise shape mismatch");
        let fwd = self.trunk.forward_tape(tape, states, trainable);
        assert!(
            tape.value(fwd.output).all_finite(),
            "policy network produced a non-finite output"
        );
        let mean = tape.columns(fwd.output, 0, d);
        let raw_log_std = tape.columns(fwd.output, d, 2 * d);
        let log_std = tape.clamp(raw_log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(log_std);
        let eps_v = tape.constant(eps.clone());
        let noise = tape.mul(std, eps_v);
        let u = tape.add(mean, noise);
        let action = tape.tanh(u);

        let base: Vec<f64> = (0..eps.rows()).map(|r| standard_log_density(eps.row(r))).collect();
        let base = tape.constant(Matrix::from_vec(eps.rows(), 1, base));
        let log_std_sum = tape.row_sums(log_std);
        let gauss = tape.sub(base, log_std_sum);

        // ln(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u)).
        let m2u = tape.scale(u, -2.0);
        let sp = tape.softplus(m2u);
        let s = tape.add(u, sp);
        let s = tape.scale(s, -2.0);
        let log_jac = tape.add_scalar(s, 2.0 * std::f64::consts::LN_2);
        let log_jac_sum = tape.row_sums(log_jac);
        let log_prob = tape.sub(gauss, log_jac_sum);

        PolicyTape {
            action,
            log_prob,
            params: fwd.params,
        }
    }

    /// Batch sample without gradients: `(actions, log_probs)`.
    pub fn sample_batch(&self, states: &Matrix, eps: &Matrix) -> (Matrix, Matrix) {
        let mut tape = Tape::new();
        let s = tape.constant(states.clone());
        let out = self.sample_tape(&mut tape, s, eps, false);
        (tape.value(out.action).clone(), tape.value(out.log_prob).clone())
    }

    /// One action for one state. Stochastic mode draws `eps ~ N(0, I)`
    /// from `rng`; deterministic mode ignores it.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], stochastic: bool, rng: &mut R) -> (Vec<f64>, f64) {
        assert_eq!(state.len(), self.obs_dim(), "state length mismatch");
        let d = self.act_dim();
        let eps: Vec<f64> = if stochastic {
            (0..d).map(|_| rng.sample(StandardNormal)).collect()
        } else {
            vec![0.0; d]
        };
        let (a, lp) = self.sample_batch(
            &Matrix::from_vec(1, state.len(), state.to_vec()),
            &Matrix::from_vec(1, d, eps),
        );
        let action = a.data().iter().map(|x| x.clamp(-ACTION_BOUND, ACTION_BOUND)).collect();
        (action, lp.get(0, 0))
    }
}
