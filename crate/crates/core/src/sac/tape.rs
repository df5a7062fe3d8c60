//! Minimal reverse-mode differentiation over matrices.
//!
//! Every operation appends a node to the [`Tape`]; [`Tape::backward`] walks
//! the nodes in reverse and accumulates adjoints into every node that
//! (transitively) depends on a trainable leaf. Constants never receive
//! gradients, which also skips the weight-gradient products for frozen
//! networks.

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Softplus(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Hcat(Var, Var),
    Columns(Var, usize, usize),
    RowSums(Var),
    Mean(Var),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros if `v` did not
    /// influence the loss.
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow.
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn unary(&mut self, a: Var, value: Matrix, op: Op) -> Var {
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Matrix, op: Op) -> Var {
        let rg = self.rg(a) || self.rg(b);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.binary(a, b, v, Op::MatMul(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a).add_row(self.value(row));
        self.binary(a, row, v, Op::AddRow(a, row))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.binary(a, b, v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.binary(a, b, v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.binary(a, b, v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.unary(a, v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.unary(a, v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.unary(a, v, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.unary(a, v, Op::Exp(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.unary(a, v, Op::Softplus(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.unary(a, v, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary(a, v, Op::Clamp(a, lo, hi))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), f64::min);
        self.binary(a, b, v, Op::Minimum(a, b))
    }

    pub fn hcat(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).hcat(self.value(b));
        self.binary(a, b, v, Op::Hcat(a, b))
    }

    pub fn columns(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).columns(start, end);
        self.unary(a, v, Op::Columns(a, start, end))
    }

    /// `rows x cols` to `rows x 1`.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let v = self.value(a).row_sums();
        self.unary(a, v, Op::RowSums(a))
    }

    /// Mean of all entries as a `1 x 1`.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = Matrix::filled(1, 1, self.value(a).mean());
        self.unary(a, v, Op::Mean(a))
    }

    fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    /// Back-propagates from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let out = &node.value;
            match node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if self.rg(a) {
                        let ga = g.gemm(false, self.value(b), true);
                        Self::accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let gb = self.value(a).gemm(true, &g, false);
                        Self::accumulate(&mut grads, b, gb);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(row) {
                        Self::accumulate(&mut grads, row, g.column_sums());
                    }
                    if self.rg(a) {
                        Self::accumulate(&mut grads, a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(b) {
                        Self::accumulate(&mut grads, b, g.clone());
                    }
                    if self.rg(a) {
                        Self::accumulate(&mut grads, a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(b) {
                        Self::accumulate(&mut grads, b, g.map(|x| -x));
                    }
                    if self.rg(a) {
                        Self::accumulate(&mut grads, a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        Self::accumulate(&mut grads, a, g.zip_map(self.value(b), |d, y| d * y));
                    }
                    if self.rg(b) {
                        Self::accumulate(&mut grads, b, g.zip_map(self.value(a), |d, x| d * x));
                    }
                }
                Op::Scale(a, s) => Self::accumulate(&mut grads, a, g.map(|d| d * s)),
                Op::AddScalar(a) => Self::accumulate(&mut grads, a, g),
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(a), |d, x| if x > 0.0 { d } else { 0.0 });
                    Self::accumulate(&mut grads, a, ga);
                }
                Op::Tanh(a) => {
                    Self::accumulate(&mut grads, a, g.zip_map(out, |d, y| d * (1.0 - y * y)))
                }
                Op::Exp(a) => Self::accumulate(&mut grads, a, g.zip_map(out, |d, y| d * y)),
                Op::Softplus(a) => {
                    let ga = g.zip_map(self.value(a), |d, x| d * sigmoid(x));
                    Self::accumulate(&mut grads, a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_map(self.value(a), |d, x| 2.0 * d * x);
                    Self::accumulate(&mut grads, a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip_map(self.value(a), |d, x| if x > lo && x < hi { d } else { 0.0 });
                    Self::accumulate(&mut grads, a, ga);
                }
                Op::Minimum(a, b) => {
                    let (va, vb) = (self.value(a), self.value(b));
                    if self.rg(a) {
                        let mask = va.zip_map(vb, |x, y| if x <= y { 1.0 } else { 0.0 });
                        Self::accumulate(&mut grads, a, g.zip_map(&mask, |d, m| d * m));
                    }
                    if self.rg(b) {
                        let mask = va.zip_map(vb, |x, y| if x <= y { 0.0 } else { 1.0 });
                        Self::accumulate(&mut grads, b, g.zip_map(&mask, |d, m| d * m));
                    }
                }
                Op::Hcat(a, b) => {
                    let split = self.value(a).cols();
                    if self.rg(a) {
                        Self::accumulate(&mut grads, a, g.columns(0, split));
                    }
                    if self.rg(b) {
                        Self::accumulate(&mut grads, b, g.columns(split, g.cols()));
                    }
                }
                Op::Columns(a, start, end) => {
                    let src = self.value(a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        for c in start..end {
                            ga.set(r, c, g.get(r, c - start));
                        }
                    }
                    Self::accumulate(&mut grads, a, ga);
                }
                Op::RowSums(a) => {
                    let src = self.value(a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        let d = g.get(r, 0);
                        for c in 0..src.cols() {
                            ga.set(r, c, d);
                        }
                    }
                    Self::accumulate(&mut grads, a, ga);
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(a).shape();
                    let d = g.get(0, 0) / (r * c) as f64;
                    Self::accumulate(&mut grads, a, Matrix::filled(r, c, d));
                }
            }
        }
        Gradients { grads }
    }
}
