//! Fully connected networks and the Adam optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::tape::{Gradients, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `fan_in x fan_out`.
    pub weight: Matrix,
    /// `1 x fan_out`.
    pub bias: Matrix,
}

/// Rectifier hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Linear>,
}

/// Tape handles of one forward pass: the output and every parameter leaf in
/// `[w0, b0, w1, b1, ...]` order.
pub struct TapeForward {
    pub output: Var,
    pub params: Vec<Var>,
}

impl DenseNet {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "a network needs input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> {
                    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
                };
                Linear {
                    weight: Matrix::from_vec(fan_in, fan_out, draw(fan_in * fan_out)),
                    bias: Matrix::from_vec(1, fan_out, draw(fan_out)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.rows()];
        w.extend(self.layers.iter().map(|l| l.weight.cols()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").weight.cols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in `[w0, b0, w1, b1, ...]` order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "parameter count mismatch");
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Plain forward pass over a batch of rows.
    pub fn forward(&self, x: &Matrix) -> Matrix {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.matmul(&layer.weight).add_row(&layer.bias);
            if i < last {
                h = h.map(|v| v.max(0.0));
            }
        }
        h
    }

    /// Forward pass recorded on `tape`. With `trainable = false` the
    /// parameters are constants and receive no gradient.
    pub fn forward_tape(&self, tape: &mut Tape, x: Var, trainable: bool) -> TapeForward {
        let last = self.layers.len() - 1;
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let (w, b) = if trainable {
                (tape.param(layer.weight.clone()), tape.param(layer.bias.clone()))
            } else {
                (tape.constant(layer.weight.clone()), tape.constant(layer.bias.clone()))
            };
            params.push(w);
            params.push(b);
            h = tape.matmul(h, w);
            h = tape.add_row(h, b);
            if i < last {
                h = tape.relu(h);
            }
        }
        TapeForward { output: h, params }
    }

    /// Gradients aligned with [`DenseNet::tensors`].
    pub fn collect_grads(&self, grads: &Gradients, params: &[Var]) -> Vec<Matrix> {
        self.tensors()
            .iter()
            .zip(params)
            .map(|(t, &v)| grads.get(v, t.shape()))
            .collect()
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn polyak_from(&mut self, online: &DenseNet, tau: f64) {
        assert_eq!(self.widths(), online.widths(), "polyak shape mismatch");
        for (t, o) in self.tensors_mut().into_iter().zip(online.tensors()) {
            for (x, &y) in t.data_mut().iter_mut().zip(o.data()) {
                *x = (1.0 - tau) * *x + tau * y;
            }
        }
    }
}

/// Target blending over matching parameter vectors.
pub fn polyak_update(target: &mut [f64], online: &[f64], tau: f64) {
    assert_eq!(target.len(), online.len(), "polyak shape mismatch");
    for (t, &o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_net(lr: f64, net: &DenseNet) -> Self {
        let sizes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
        Self::new(lr, &sizes)
    }

    /// Descends along `grads`, one slice per parameter tensor.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }

    pub fn step_net(&mut self, net: &mut DenseNet, grads: &[Matrix]) {
        let g: Vec<&[f64]> = grads.iter().map(|m| m.data()).collect();
        let p: Vec<&mut [f64]> = net.tensors_mut().into_iter().map(|t| t.data_mut()).collect();
        self.step(p, &g);
    }
}
