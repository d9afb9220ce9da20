//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] is an append-only tape: every operation pushes a node whose
//! parents already exist, so node order is a valid topological order and
//! [`Graph::backward`] simply walks the tape in reverse. Leaves are either
//! trainable parameters (they receive gradients) or constants (they don't).
//!
//! ```
//! use gmc_core::autodiff::Graph;
//! use gmc_core::Tensor;
//!
//! let mut g = Graph::new();
//! let w = g.param(Tensor::from_rows(&[vec![3.0, 4.0]]).unwrap());
//! let loss = g.frobenius_sq(w).unwrap();
//! assert_eq!(g.value(loss).item(), 25.0);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(w).data(), &[6.0, 8.0]);
//! ```

pub mod check;

use crate::error::{GmcError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Element-wise operation kinds accepted by [`Graph::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add(Var),
    Sub(Var),
    Hadamard(Var),
    Sigmoid,
    Tanh,
    Scale(f64),
}

#[derive(Clone, Debug)]
enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRow(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Scale(Var, f64),
    RowSlice {
        a: Var,
        start: usize,
    },
    Sum(Var),
    FrobeniusSq(Var),
    Dirichlet {
        lap: Tensor,
        x: Var,
    },
    MaskedBce {
        logits: Var,
        targets: Tensor,
        mask: Tensor,
        count: usize,
    },
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Gradients of a scalar loss with respect to every node on the tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    /// Gradient for `v`; zero when `v` does not influence the loss. Nodes
    /// that do not depend on any parameter (constants) carry an empty tensor.
    pub fn get(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }

    /// Test hook: perturbs one gradient entry in place.
    pub fn corrupt(&mut self, v: Var, index: usize, delta: f64) {
        self.grads[v.0].data_mut()[index] += delta;
    }
}

/// Static computation graph. Confined to one thread; build one per task.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `softplus(z) - t z`, the logistic loss for target `t`.
fn logistic_loss(z: f64, t: f64) -> f64 {
    z.max(0.0) - t * z + (-z.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(GmcError::numerical(
                "autodiff",
                format!("non-finite value produced by {name}"),
            ));
        }
        let requires_grad = match &op {
            Op::Param => true,
            Op::Constant => false,
            Op::MatMul(a, b)
            | Op::MatMulNt(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::AddRow(a, b) => self.requires_grad(*a) || self.requires_grad(*b),
            Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Scale(a, _)
            | Op::RowSlice { a, .. }
            | Op::Sum(a)
            | Op::FrobeniusSq(a)
            | Op::Dirichlet { x: a, .. }
            | Op::MaskedBce { logits: a, .. } => self.requires_grad(*a),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Param, value, "param")
            .expect("parameter values must be finite")
    }

    /// Fallible variant of [`param`](Self::param) for untrusted values.
    pub fn try_param(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Param, value, "param")
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Constant, value, "constant")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b)).map_err(|_| {
            GmcError::dim(
                "autodiff::matmul",
                format!("{:?} x {:?}", self.shape(a), self.shape(b)),
            )
        })?;
        self.push(Op::MatMul(a, b), out, "matmul")
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b)).map_err(|_| {
            GmcError::dim(
                "autodiff::matmul_nt",
                format!("{:?} x {:?}ᵀ", self.shape(a), self.shape(b)),
            )
        })?;
        self.push(Op::MatMulNt(a, b), out, "matmul_nt")
    }

    pub fn elementwise(&mut self, a: Var, kind: Elementwise) -> Result<Var> {
        match kind {
            Elementwise::Add(b) => {
                let out = self.binary_value(a, b, "autodiff::add", |x, y| x + y)?;
                self.push(Op::Add(a, b), out, "add")
            }
            Elementwise::Sub(b) => {
                let out = self.binary_value(a, b, "autodiff::sub", |x, y| x - y)?;
                self.push(Op::Sub(a, b), out, "sub")
            }
            Elementwise::Hadamard(b) => {
                let out = self.binary_value(a, b, "autodiff::hadamard", |x, y| x * y)?;
                self.push(Op::Hadamard(a, b), out, "hadamard")
            }
            Elementwise::Sigmoid => {
                let out = self.value(a).map(sigmoid);
                self.push(Op::Sigmoid(a), out, "sigmoid")
            }
            Elementwise::Tanh => {
                let out = self.value(a).map(f64::tanh);
                self.push(Op::Tanh(a), out, "tanh")
            }
            Elementwise::Scale(s) => {
                let out = self.value(a).scale(s);
                self.push(Op::Scale(a, s), out, "scale")
            }
        }
    }

    fn binary_value(
        &self,
        a: Var,
        b: Var,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.value(a).zip_map(self.value(b), op, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, Elementwise::Add(b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, Elementwise::Sub(b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, Elementwise::Hadamard(b))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.elementwise(a, Elementwise::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.elementwise(a, Elementwise::Tanh)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.elementwise(a, Elementwise::Scale(s))
    }

    /// Adds the `1 x k` row `bias` to every row of the `m x k` matrix `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        if self.shape(bias) != (1, k) {
            return Err(GmcError::dim(
                "autodiff::add_row",
                format!("{:?} + broadcast {:?}", (m, k), self.shape(bias)),
            ));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..m {
            for (o, bj) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bj;
            }
        }
        self.push(Op::AddRow(a, bias), out, "add_row")
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push(Op::Sum(a), Tensor::scalar(s), "sum")
    }

    /// Rows `start..end` of `a`.
    pub fn row_slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start > end || end > rows {
            return Err(GmcError::dim(
                "autodiff::row_slice",
                format!("rows {start}..{end} of a {rows}x{cols} matrix"),
            ));
        }
        let src = self.value(a);
        let value = Tensor::from_vec(
            end - start,
            cols,
            src.data()[start * cols..end * cols].to_vec(),
        )?;
        self.push(Op::RowSlice { a, start }, value, "row_slice")
    }

    /// `Σ a_ij²`
    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).frobenius_sq();
        self.push(Op::FrobeniusSq(a), Tensor::scalar(s), "frobenius_sq")
    }

    /// Dirichlet energy `tr(xᵀ L x)` for a symmetric operator `lap`.
    pub fn dirichlet(&mut self, lap: &Tensor, x: Var) -> Result<Var> {
        let (m, _) = self.shape(x);
        if lap.rows() != lap.cols() || lap.rows() != m {
            return Err(GmcError::dim(
                "autodiff::dirichlet",
                format!(
                    "operator {:?} against signal {:?}",
                    lap.shape(),
                    self.shape(x)
                ),
            ));
        }
        if !lap.is_symmetric(1e-9) {
            return Err(GmcError::invalid(
                "autodiff::dirichlet",
                "Laplacian operator is not symmetric",
            ));
        }
        let xv = self.value(x);
        let lx = lap.matmul(xv)?;
        let energy: f64 = xv.data().iter().zip(lx.data()).map(|(a, b)| a * b).sum();
        self.push(
            Op::Dirichlet {
                lap: lap.clone(),
                x,
            },
            Tensor::scalar(energy),
            "dirichlet",
        )
    }

    /// Mean binary cross-entropy over entries where `mask == 1`, computed
    /// from logits.
    pub fn masked_bce(&mut self, logits: Var, targets: &Tensor, mask: &Tensor) -> Result<Var> {
        let shape = self.shape(logits);
        if targets.shape() != shape || mask.shape() != shape {
            return Err(GmcError::dim(
                "autodiff::masked_bce",
                format!(
                    "logits {:?}, targets {:?}, mask {:?}",
                    shape,
                    targets.shape(),
                    mask.shape()
                ),
            ));
        }
        let mut count = 0usize;
        let mut total = 0.0;
        let z = self.value(logits);
        for ((&zi, &ti), &mi) in z.data().iter().zip(targets.data()).zip(mask.data()) {
            if mi != 0.0 {
                if ti != 0.0 && ti != 1.0 {
                    return Err(GmcError::invalid(
                        "autodiff::masked_bce",
                        format!("target {ti} is not binary"),
                    ));
                }
                count += 1;
                total += logistic_loss(zi, ti);
            }
        }
        if count == 0 {
            return Err(GmcError::invalid(
                "autodiff::masked_bce",
                "mask selects no entries; the mean is undefined",
            ));
        }
        self.push(
            Op::MaskedBce {
                logits,
                targets: targets.clone(),
                mask: mask.clone(),
                count,
            },
            Tensor::scalar(total / count as f64),
            "masked_bce",
        )
    }

    /// Reverse sweep from a scalar `loss`. Accumulators are freshly zeroed
    /// on every call, so repeated calls return identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(GmcError::invalid(
                "autodiff::backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| {
                if n.requires_grad {
                    Tensor::zeros(n.value.rows(), n.value.cols())
                } else {
                    Tensor::zeros(0, 0)
                }
            })
            .collect();
        grads[loss.0] = Tensor::scalar(1.0);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = std::mem::replace(&mut grads[idx], Tensor::zeros(0, 0));
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = g;
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, value: &Tensor, g: &Tensor, grads: &mut [Tensor]) -> Result<()> {
        match op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    let da = g.matmul_nt(self.value(*b))?;
                    grads[a.0].axpy(1.0, &da);
                }
                if self.requires_grad(*b) {
                    let db = self.value(*a).matmul_tn(g)?;
                    grads[b.0].axpy(1.0, &db);
                }
            }
            Op::MatMulNt(a, b) => {
                // out = A Bᵀ: dA = G B, dB = Gᵀ A
                if self.requires_grad(*a) {
                    let da = g.matmul(self.value(*b))?;
                    grads[a.0].axpy(1.0, &da);
                }
                if self.requires_grad(*b) {
                    let db = g.matmul_tn(self.value(*a))?;
                    grads[b.0].axpy(1.0, &db);
                }
            }
            Op::Add(a, b) => {
                if self.requires_grad(*a) {
                    grads[a.0].axpy(1.0, g);
                }
                if self.requires_grad(*b) {
                    grads[b.0].axpy(1.0, g);
                }
            }
            Op::Sub(a, b) => {
                if self.requires_grad(*a) {
                    grads[a.0].axpy(1.0, g);
                }
                if self.requires_grad(*b) {
                    grads[b.0].axpy(-1.0, g);
                }
            }
            Op::Hadamard(a, b) => {
                if self.requires_grad(*a) {
                    let da = g.hadamard(self.value(*b))?;
                    grads[a.0].axpy(1.0, &da);
                }
                if self.requires_grad(*b) {
                    let db = g.hadamard(self.value(*a))?;
                    grads[b.0].axpy(1.0, &db);
                }
            }
            Op::AddRow(a, bias) => {
                if self.requires_grad(*a) {
                    grads[a.0].axpy(1.0, g);
                }
                if self.requires_grad(*bias) {
                    let cols = g.cols();
                    let acc = grads[bias.0].data_mut();
                    for i in 0..g.rows() {
                        for (j, gv) in g.row(i).iter().enumerate().take(cols) {
                            acc[j] += gv;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                let da = value.zip_map(g, "autodiff::sigmoid", |s, gv| gv * s * (1.0 - s))?;
                grads[a.0].axpy(1.0, &da);
            }
            Op::Tanh(a) => {
                let da = value.zip_map(g, "autodiff::tanh", |t, gv| gv * (1.0 - t * t))?;
                grads[a.0].axpy(1.0, &da);
            }
            Op::Scale(a, s) => {
                grads[a.0].axpy(*s, g);
            }
            Op::RowSlice { a, start } => {
                let cols = g.cols();
                let acc = &mut grads[a.0].data_mut()[start * cols..(start + g.rows()) * cols];
                for (d, gv) in acc.iter_mut().zip(g.data()) {
                    *d += gv;
                }
            }
            Op::Sum(a) => {
                let gv = g.item();
                for v in grads[a.0].data_mut() {
                    *v += gv;
                }
            }
            Op::FrobeniusSq(a) => {
                let gv = g.item();
                grads[a.0].axpy(2.0 * gv, self.value(*a));
            }
            Op::Dirichlet { lap, x } => {
                // d tr(xᵀLx)/dx = (L + Lᵀ) x = 2 L x for symmetric L
                let lx = lap.matmul(self.value(*x))?;
                grads[x.0].axpy(2.0 * g.item(), &lx);
            }
            Op::MaskedBce {
                logits,
                targets,
                mask,
                count,
            } => {
                let scale = g.item() / *count as f64;
                let z = self.value(*logits).data();
                let acc = grads[logits.0].data_mut();
                for i in 0..z.len() {
                    if mask.data()[i] != 0.0 {
                        acc[i] += scale * (sigmoid(z[i]) - targets.data()[i]);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identity_matmul_gradient_is_ones() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::identity(2)).unwrap();
        let m = g.param(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let p = g.matmul(i, m).unwrap();
        assert_eq!(g.value(p), g.value(m));
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(m), &Tensor::ones(2, 2));
    }

    #[test]
    fn scalar_product_rule() {
        let mut g = Graph::new();
        let a = g.param(Tensor::scalar(2.0));
        let b = g.param(Tensor::scalar(3.0));
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).item(), 6.0);
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.get(a).item(), 3.0);
        assert_eq!(grads.get(b).item(), 2.0);
    }

    #[test]
    fn matmul_shape_error() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(2, 3));
        let b = g.param(Tensor::zeros(2, 3));
        assert!(matches!(g.matmul(a, b), Err(GmcError::Dimension { .. })));
        let c = g_const(&mut g);
        assert!(matches!(g.add(a, c), Err(GmcError::Dimension { .. })));
    }

    fn g_const(g: &mut Graph) -> Var {
        g.constant(Tensor::zeros(3, 3)).unwrap()
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let s = g.sigmoid(x).unwrap();
        assert_eq!(g.value(s).item(), 0.5);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).item(), 0.25);
    }

    #[test]
    fn zero_mask_blocks_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[&[1.0, -2.0], &[0.5, 3.0]]));
        let mask = g.constant(Tensor::zeros(2, 2)).unwrap();
        let h = g.hadamard(x, mask).unwrap();
        assert_eq!(g.value(h), &Tensor::zeros(2, 2));
        let loss = g.frobenius_sq(h).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x), &Tensor::zeros(2, 2));
    }

    #[test]
    fn frobenius_values() {
        let mut g = Graph::new();
        let a = g.param(t(&[&[3.0, 4.0]]));
        let f = g.frobenius_sq(a).unwrap();
        assert_eq!(g.value(f).item(), 25.0);
        let z = g.param(Tensor::zeros(3, 2));
        let fz = g.frobenius_sq(z).unwrap();
        assert_eq!(g.value(fz).item(), 0.0);
        let grads = g.backward(fz).unwrap();
        assert_eq!(grads.get(z), &Tensor::zeros(3, 2));
    }

    fn path3() -> Tensor {
        t(&[&[1.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 1.0]])
    }

    #[test]
    fn dirichlet_values() {
        let mut g = Graph::new();
        let x = g.param(t(&[&[0.0], &[1.0], &[2.0]]));
        let d = g.dirichlet(&path3(), x).unwrap();
        assert_eq!(g.value(d).item(), 2.0);

        let c = g.param(Tensor::filled(3, 2, 4.5));
        let dc = g.dirichlet(&path3(), c).unwrap();
        assert_eq!(g.value(dc).item(), 0.0);

        let dz = g.dirichlet(&Tensor::zeros(3, 3), x).unwrap();
        assert_eq!(g.value(dz).item(), 0.0);
    }

    #[test]
    fn dirichlet_rejects_asymmetric_operator() {
        let mut g = Graph::new();
        let x = g.param(Tensor::ones(3, 1));
        let mut lap = path3();
        lap.set(0, 2, 1e-3);
        assert!(matches!(
            g.dirichlet(&lap, x),
            Err(GmcError::Validation { .. })
        ));
    }

    #[test]
    fn bce_values() {
        let mut g = Graph::new();
        let z = g.param(t(&[&[20.0, 0.0]]));
        let targets = t(&[&[1.0, 1.0]]);
        let only_first = g.masked_bce(z, &targets, &t(&[&[1.0, 0.0]])).unwrap();
        assert!(g.value(only_first).item() < 1e-8);
        let only_second = g.masked_bce(z, &targets, &t(&[&[0.0, 1.0]])).unwrap();
        assert!((g.value(only_second).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let grads = g.backward(only_second).unwrap();
        assert_eq!(grads.get(z).data(), &[0.0, -0.5]);
    }

    #[test]
    fn bce_empty_mask_is_an_error() {
        let mut g = Graph::new();
        let z = g.param(Tensor::zeros(2, 1));
        assert!(g
            .masked_bce(z, &Tensor::zeros(2, 1), &Tensor::zeros(2, 1))
            .is_err());
    }

    #[test]
    fn bce_is_stable_for_extreme_logits() {
        let mut g = Graph::new();
        let z = g.param(t(&[&[-800.0, 800.0]]));
        let l = g
            .masked_bce(z, &t(&[&[1.0, 0.0]]), &Tensor::ones(1, 2))
            .unwrap();
        assert!((g.value(l).item() - 800.0).abs() < 1e-9);
    }

    #[test]
    fn disconnected_leaf_has_zero_gradient() {
        let mut g = Graph::new();
        let w = g.param(t(&[&[1.0, 2.0]]));
        let other = g.param(t(&[&[5.0]]));
        let loss = g.frobenius_sq(w).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).data(), &[2.0, 4.0]);
        assert_eq!(grads.get(other).data(), &[0.0]);
    }

    #[test]
    fn backward_is_repeatable() {
        let mut g = Graph::new();
        let w = g.param(t(&[&[0.3, -0.7], &[1.1, 0.2]]));
        let s = g.tanh(w).unwrap();
        let l = g.frobenius_sq(s).unwrap();
        let g1 = g.backward(l).unwrap();
        let g2 = g.backward(l).unwrap();
        assert_eq!(g1.get(w), g2.get(w));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let w = g.param(Tensor::ones(2, 2));
        assert!(g.backward(w).is_err());
    }

    #[test]
    fn add_row_broadcasts() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(3, 2));
        let b = g.param(t(&[&[1.0, 2.0]]));
        let o = g.add_row(a, b).unwrap();
        assert_eq!(g.value(o).row(2), &[1.0, 2.0]);
        let s = g.sum(o).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(b).data(), &[3.0, 3.0]);
    }
}
