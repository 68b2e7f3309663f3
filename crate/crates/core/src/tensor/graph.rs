use alloc::vec::Vec;

use rand::Rng as _;

use super::math::{exp, log_sum_exp, sigmoid, tanh};
use super::{matmul_acc, matmul_at_acc, matmul_bt_acc, Grads, ParamId, ParamStore, Rng, Tensor};
use crate::Real;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u32);

impl Var {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Variable,
    Param(ParamId),
    MatMul(Var, Var),
    /// The right operand may be a `1 x n` row broadcast over every row.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Real),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    Gather(Var, Vec<usize>),
    Dropout(Var, Vec<Real>),
    Sum(Var),
    /// Row-wise softmax cross entropy summed over rows; keeps the softmax.
    CrossEntropy(Var, Vec<usize>, Tensor),
}

#[derive(Debug)]
struct Node {
    // None for parameters, whose value lives in the store
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// The tape for one forward pass. Parameters are read from a borrowed
/// [`ParamStore`], so any number of graphs can share one store.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to a leaf created by [`Graph::variable`] or
    /// [`Graph::param`]. `None` when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.idx()).and_then(Option::as_ref)
    }

    /// Adds the parameter gradients, scaled, into `out`.
    pub fn accumulate_into(&self, out: &mut Grads, scale: Real) {
        for &(id, v) in &self.params {
            if let Some(g) = self.wrt(v) {
                out.accumulate(id, g, scale);
            }
        }
    }

    pub fn param_grads(&self) -> Grads {
        let mut g = Grads::default();
        self.accumulate_into(&mut g, 1.0);
        g
    }
}

macro_rules! shape_check {
    ($cond:expr, $op:expr, $($shape:expr),+) => {
        assert!($cond, "{}: incompatible shapes {:?}", $op, [$($shape),+]);
    };
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph { params, nodes: Vec::new(), param_vars: alloc::vec![None; params.len()] }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.idx()];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Option<Tensor>, op: Op, requires_grad: bool) -> Var {
        let v = Var(self.nodes.len() as u32);
        self.nodes.push(Node { value, op, requires_grad });
        v
    }

    fn op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.idx()].requires_grad);
        self.push(Some(value), op, rg)
    }

    /// A parameter leaf. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(None, Op::Param(id), true);
        self.param_vars[id.index()] = Some(v);
        v
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Some(t), Op::Constant, false)
    }

    /// A non-parameter leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(Some(t), Op::Variable, true)
    }

    #[track_caller]
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let ([m, k], [k2, n]) = (x.shape(), y.shape());
        shape_check!(k == k2, "matmul", x.shape(), y.shape());
        let mut out = Tensor::zeros(m, n);
        matmul_acc(x.data(), y.data(), out.data_mut(), m, k, n);
        self.op(out, Op::MatMul(a, b), &[a, b])
    }

    #[track_caller]
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let broadcast = y.rows() == 1 && x.rows() != 1;
        shape_check!(x.cols() == y.cols() && (x.rows() == y.rows() || broadcast), "add", x.shape(), y.shape());
        let mut out = x.clone();
        let cols = x.cols();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += if broadcast { y.data()[i % cols] } else { y.data()[i] };
        }
        self.op(out, Op::Add(a, b), &[a, b])
    }

    #[track_caller]
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        shape_check!(x.shape() == y.shape(), "sub", x.shape(), y.shape());
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Tensor::new(x.rows(), x.cols(), data);
        self.op(out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    #[track_caller]
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        shape_check!(x.shape() == y.shape(), "mul", x.shape(), y.shape());
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.rows(), x.cols(), data);
        self.op(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: Real) -> Var {
        let x = self.value(a);
        let out = Tensor::new(x.rows(), x.cols(), x.data().iter().map(|v| v * s).collect());
        self.op(out, Op::Scale(a, s), &[a])
    }

    #[track_caller]
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        for &p in parts {
            shape_check!(self.value(p).rows() == rows, "concat_cols", self.shape(parts[0]), self.shape(p));
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[off..off + t.cols()].copy_from_slice(t.row(r));
            }
            off += t.cols();
        }
        self.op(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    #[track_caller]
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            shape_check!(t.cols() == cols, "concat_rows", self.shape(parts[0]), t.shape());
            data.extend_from_slice(t.data());
            rows += t.rows();
        }
        self.op(Tensor::new(rows, cols, data), Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..start + len`.
    #[track_caller]
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        shape_check!(start + len <= x.cols(), "slice_cols", x.shape(), [start, len]);
        let mut out = Tensor::zeros(x.rows(), len);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.op(out, Op::SliceCols(a, start), &[a])
    }

    /// Rows `start..start + len`.
    #[track_caller]
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        shape_check!(start + len <= x.rows(), "slice_rows", x.shape(), [start, len]);
        let c = x.cols();
        let out = Tensor::new(len, c, x.data()[start * c..(start + len) * c].to_vec());
        self.op(out, Op::SliceRows(a, start), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.op(out, Op::Transpose(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::new(x.rows(), x.cols(), x.data().iter().map(|&v| sigmoid(v)).collect());
        self.op(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::new(x.rows(), x.cols(), x.data().iter().map(|&v| tanh(v)).collect());
        self.op(out, Op::Tanh(a), &[a])
    }

    /// Softmax of each row independently.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        self.op(out, Op::SoftmaxRows(a), &[a])
    }

    /// Rows of `a` selected by `ids` (embedding lookup when `a` is a table).
    #[track_caller]
    pub fn gather(&mut self, a: Var, ids: &[usize]) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            shape_check!(i < x.rows(), "gather", x.shape(), [i, 0]);
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::new(ids.len(), c, data);
        self.op(out, Op::Gather(a, ids.to_vec()), &[a])
    }

    /// Inverted dropout. Identity when `train` is false or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: Real, train: bool, rng: &mut Rng) -> Var {
        if !train || p <= 0.0 {
            return a;
        }
        let keep = 1.0 - p;
        let x = self.value(a);
        let mask: Vec<Real> = (0..x.len()).map(|_| if rng.random::<Real>() < keep { 1.0 / keep } else { 0.0 }).collect();
        self.dropout_with_mask(a, mask)
    }

    /// Dropout with an explicit multiplicative mask.
    #[track_caller]
    pub fn dropout_with_mask(&mut self, a: Var, mask: Vec<Real>) -> Var {
        let x = self.value(a);
        shape_check!(mask.len() == x.len(), "dropout", x.shape(), [mask.len(), 1]);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(x.rows(), x.cols(), data);
        self.op(out, Op::Dropout(a, mask), &[a])
    }

    /// Sum of all entries as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.op(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// `-Σ_r log softmax(logits_r)[targets[r]]` as a `1 x 1` tensor.
    #[track_caller]
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let x = self.value(logits);
        shape_check!(targets.len() == x.rows(), "cross_entropy", x.shape(), [targets.len(), 1]);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            shape_check!(t < x.cols(), "cross_entropy", x.shape(), [r, t]);
            loss += log_sum_exp(x.row(r)) - x.get(r, t);
        }
        let probs = softmax_rows(x);
        self.op(Tensor::scalar(loss), Op::CrossEntropy(logits, targets.to_vec(), probs), &[logits])
    }

    /// Reverse sweep from a `1 x 1` node.
    #[track_caller]
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), [1, 1], "backward: loss must be a scalar");
        let mut grads: Vec<Option<Tensor>> = alloc::vec![None; self.nodes.len()];
        grads[loss.idx()] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.idx()).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match node.op {
                Op::Constant | Op::Variable | Op::Param(_) => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(i, &g, &mut grads);
        }
        let params = self
            .param_vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
            .collect();
        Gradients { grads, params }
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = node.value.as_ref().expect("op nodes own their value");
        match &node.op {
            Op::Constant | Op::Variable | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                let ([m, k], [_, n]) = (x.shape(), w.shape());
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, x.shape());
                    matmul_bt_acc(g.data(), w.data(), slot.data_mut(), m, k, n);
                }
                if self.rg(*b) {
                    let slot = grad_slot(grads, *b, w.shape());
                    matmul_at_acc(x.data(), g.data(), slot.data_mut(), m, k, n);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.rg(*a) {
                    grad_slot(grads, *a, g.shape()).add_scaled(g, 1.0);
                }
                if self.rg(*b) {
                    let shape = self.shape(*b);
                    let slot = grad_slot(grads, *b, shape);
                    if shape == g.shape() {
                        slot.add_scaled(g, sign);
                    } else {
                        for r in 0..g.rows() {
                            for (s, v) in slot.data_mut().iter_mut().zip(g.row(r)) {
                                *s += sign * v;
                            }
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                for (this, other) in [(*a, *b), (*b, *a)] {
                    if self.rg(this) {
                        let o = self.value(other).data();
                        let slot = grad_slot(grads, this, g.shape());
                        for ((s, gv), ov) in slot.data_mut().iter_mut().zip(g.data()).zip(o) {
                            *s += gv * ov;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.rg(*a) {
                    grad_slot(grads, *a, g.shape()).add_scaled(g, *s);
                }
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.shape(p);
                    if self.rg(p) {
                        let slot = grad_slot(grads, p, shape);
                        for r in 0..shape[0] {
                            for (s, v) in slot.row_mut(r).iter_mut().zip(&g.row(r)[off..off + shape[1]]) {
                                *s += v;
                            }
                        }
                    }
                    off += shape[1];
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let shape = self.shape(p);
                    let n = shape[0] * shape[1];
                    if self.rg(p) {
                        let slot = grad_slot(grads, p, shape);
                        for (s, v) in slot.data_mut().iter_mut().zip(&g.data()[off..off + n]) {
                            *s += v;
                        }
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, self.shape(*a));
                    for r in 0..g.rows() {
                        for (s, v) in slot.row_mut(r)[*start..*start + g.cols()].iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, self.shape(*a));
                    let c = g.cols();
                    for (s, v) in slot.data_mut()[start * c..start * c + g.len()].iter_mut().zip(g.data()) {
                        *s += v;
                    }
                }
            }
            Op::Transpose(a) => {
                if self.rg(*a) {
                    grad_slot(grads, *a, self.shape(*a)).add_scaled(&g.transpose(), 1.0);
                }
            }
            Op::Sigmoid(a) => {
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, g.shape());
                    for ((s, gv), yv) in slot.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *s += gv * yv * (1.0 - yv);
                    }
                }
            }
            Op::Tanh(a) => {
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, g.shape());
                    for ((s, gv), yv) in slot.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *s += gv * (1.0 - yv * yv);
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, g.shape());
                    for r in 0..g.rows() {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let dot: Real = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for ((s, gv), yv) in slot.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *s += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::Gather(a, ids) => {
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, self.shape(*a));
                    for (r, &id) in ids.iter().enumerate() {
                        for (s, v) in slot.row_mut(id).iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if self.rg(*a) {
                    let slot = grad_slot(grads, *a, g.shape());
                    for ((s, gv), m) in slot.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *s += gv * m;
                    }
                }
            }
            Op::Sum(a) => {
                if self.rg(*a) {
                    let gv = g.item();
                    grad_slot(grads, *a, self.shape(*a)).data_mut().iter_mut().for_each(|s| *s += gv);
                }
            }
            Op::CrossEntropy(a, targets, probs) => {
                if self.rg(*a) {
                    let gv = g.item();
                    let slot = grad_slot(grads, *a, probs.shape());
                    for (r, &t) in targets.iter().enumerate() {
                        let row = slot.row_mut(r);
                        for (s, p) in row.iter_mut().zip(probs.row(r)) {
                            *s += gv * p;
                        }
                        row[t] -= gv;
                    }
                }
            }
        }
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.idx()].requires_grad
    }
}

fn grad_slot(grads: &mut [Option<Tensor>], v: Var, shape: [usize; 2]) -> &mut Tensor {
    grads[v.idx()].get_or_insert_with(|| Tensor::zeros(shape[0], shape[1]))
}

/// Row-wise softmax; `-inf` logits get probability zero.
pub(crate) fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v = exp(*v - lse);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{seeded_rng, uniform_tensor};
    use alloc::boxed::Box;
    use proptest::prelude::*;

    type Build = Box<dyn Fn(&mut Graph<'_>, &[Var]) -> Var>;

    fn rel_err(a: &[Real], b: &[Real]) -> Real {
        let diff: Real = crate::tensor::math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<Real>());
        let na: Real = crate::tensor::math::sqrt(a.iter().map(|x| x * x).sum::<Real>());
        let nb: Real = crate::tensor::math::sqrt(b.iter().map(|x| x * x).sum::<Real>());
        diff / na.max(nb).max(1e-8)
    }

    /// Checks analytic gradients of `sum(f(inputs) ⊙ R)` against central
    /// differences, for every input.
    fn grad_check(inputs: &[Tensor], f: &Build, seed: u64) -> Real {
        let store = ParamStore::new();
        let eval = |ins: &[Tensor]| -> Real {
            let mut g = Graph::new(&store);
            let vars: Vec<Var> = ins.iter().map(|t| g.variable(t.clone())).collect();
            let out = f(&mut g, &vars);
            let [r, c] = g.shape(out);
            let w = g.constant(uniform_tensor(&mut seeded_rng(seed), r, c, 0.0, 1.0));
            let prod = g.mul(out, w);
            let s = g.sum(prod);
            g.value(s).item()
        };
        let mut g = Graph::new(&store);
        let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let out = f(&mut g, &vars);
        let [r, c] = g.shape(out);
        let w = g.constant(uniform_tensor(&mut seeded_rng(seed), r, c, 0.0, 1.0));
        let prod = g.mul(out, w);
        let s = g.sum(prod);
        let grads = g.backward(s);

        let h: Real = 1e-4;
        let mut worst: Real = 0.0;
        for (k, v) in vars.iter().enumerate() {
            let analytic = grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].rows(), inputs[k].cols()));
            let mut numeric = Vec::with_capacity(inputs[k].len());
            for j in 0..inputs[k].len() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[j] += h;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[j] -= h;
                numeric.push((eval(&plus) - eval(&minus)) / (2.0 * h));
            }
            worst = worst.max(rel_err(analytic.data(), &numeric));
        }
        worst
    }

    fn rand_t(seed: u64, r: usize, c: usize) -> Tensor {
        uniform_tensor(&mut seeded_rng(seed), r, c, 0.0, 1.0)
    }

    const TOL: Real = 1e-4;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matmul_grad(m in 1usize..=8, k in 1usize..=8, n in 1usize..=8, seed: u64) {
            let f: Build = Box::new(|g, v| g.matmul(v[0], v[1]));
            let e = grad_check(&[rand_t(seed, m, k), rand_t(seed ^ 1, k, n)], &f, seed);
            prop_assert!(e <= TOL, "rel err {e}");
        }

        #[test]
        fn elementwise_grads(r in 1usize..=8, c in 1usize..=8, seed: u64) {
            let a = rand_t(seed, r, c);
            let b = rand_t(seed ^ 1, r, c);
            let ops: [Build; 7] = [
                Box::new(|g, v| g.add(v[0], v[1])),
                Box::new(|g, v| g.sub(v[0], v[1])),
                Box::new(|g, v| g.mul(v[0], v[1])),
                Box::new(|g, v| { let t = g.scale(v[0], -2.5); g.add(t, v[1]) }),
                Box::new(|g, v| { let t = g.sigmoid(v[0]); g.mul(t, v[1]) }),
                Box::new(|g, v| { let t = g.tanh(v[0]); g.mul(t, v[1]) }),
                Box::new(|g, v| { let t = g.softmax_rows(v[0]); g.mul(t, v[1]) }),
            ];
            for (i, f) in ops.iter().enumerate() {
                let e = grad_check(&[a.clone(), b.clone()], f, seed);
                prop_assert!(e <= TOL, "op {i}: rel err {e}");
            }
        }

        #[test]
        fn broadcast_add_grad(r in 2usize..=8, c in 1usize..=8, seed: u64) {
            let f: Build = Box::new(|g, v| g.add(v[0], v[1]));
            let e = grad_check(&[rand_t(seed, r, c), rand_t(seed ^ 1, 1, c)], &f, seed);
            prop_assert!(e <= TOL, "rel err {e}");
        }

        #[test]
        fn structural_grads(r in 1usize..=8, c in 2usize..=8, seed: u64) {
            let a = rand_t(seed, r, c);
            let b = rand_t(seed ^ 1, r, c);
            let ops: [Build; 6] = [
                Box::new(|g, v| g.concat_cols(&[v[0], v[1], v[0]])),
                Box::new(|g, v| g.concat_rows(&[v[1], v[0]])),
                Box::new(move |g, v| g.slice_cols(v[0], 1, c - 1)),
                Box::new(move |g, v| { let t = g.concat_rows(&[v[0], v[1]]); g.slice_rows(t, 1, r) }),
                Box::new(|g, v| g.transpose(v[1])),
                Box::new(move |g, v| g.gather(v[0], &[r - 1, 0, r - 1])),
            ];
            for (i, f) in ops.iter().enumerate() {
                let e = grad_check(&[a.clone(), b.clone()], f, seed);
                prop_assert!(e <= TOL, "op {i}: rel err {e}");
            }
        }

        #[test]
        fn dropout_and_loss_grads(r in 1usize..=8, c in 1usize..=8, seed: u64) {
            let a = rand_t(seed, r, c);
            let mask: Vec<Real> = (0..r * c).map(|i| if (seed >> (i % 64)) & 1 == 1 { 2.0 } else { 0.0 }).collect();
            let f: Build = Box::new(move |g, v| g.dropout_with_mask(v[0], mask.clone()));
            prop_assert!(grad_check(&[a.clone()], &f, seed) <= TOL);

            let targets: Vec<usize> = (0..r).map(|i| (seed as usize).wrapping_add(i) % c).collect();
            let f: Build = Box::new(move |g, v| g.cross_entropy(v[0], &targets));
            let e = grad_check(&[a.scaled(3.0)], &f, seed);
            prop_assert!(e <= TOL, "rel err {e}");
        }
    }

    #[test]
    fn reused_parameter_accumulates() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::row_vector(&[2.0]));
        let mut g = Graph::new(&store);
        let w = g.param(id);
        assert_eq!(g.param(id), w);
        let sq = g.mul(w, w);
        let s = g.sum(sq);
        let grads = g.backward(s).param_grads();
        assert_eq!(grads.get(id).unwrap().item(), 4.0);
    }

    #[test]
    fn known_values() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let z = g.variable(Tensor::zeros(1, 3));
        let p = g.softmax_rows(z);
        for &v in g.value(p).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let x = g.variable(Tensor::scalar(0.0));
        let s = g.sigmoid(x);
        assert_eq!(g.value(s).item(), 0.5);
        let grads = g.backward(s);
        assert_eq!(grads.wrt(x).unwrap().item(), 0.25);
    }

    #[test]
    fn restricted_cross_entropy_matches_masked_full() {
        let store = ParamStore::new();
        let full = [0.3, -1.2, 2.0, 0.7, -0.1];
        let keep = [0usize, 2, 3];
        let masked: Vec<Real> = (0..5).map(|i| if keep.contains(&i) { full[i] } else { Real::NEG_INFINITY }).collect();
        let restricted: Vec<Real> = keep.iter().map(|&i| full[i]).collect();
        let mut g = Graph::new(&store);
        let a = g.constant(Tensor::row_vector(&masked));
        let b = g.constant(Tensor::row_vector(&restricted));
        let la = g.cross_entropy(a, &[2]);
        let lb = g.cross_entropy(b, &[1]);
        assert!((g.value(la).item() - g.value(lb).item()).abs() < 1e-12);
    }

    #[test]
    fn constants_get_no_gradient() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let c = g.constant(Tensor::scalar(3.0));
        let x = g.variable(Tensor::scalar(2.0));
        let y = g.mul(c, x);
        let grads = g.backward(y);
        assert!(grads.wrt(c).is_none());
        assert_eq!(grads.wrt(x).unwrap().item(), 3.0);
    }

    #[test]
    #[should_panic(expected = "matmul")]
    fn shape_mismatch_names_the_op() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        g.matmul(a, b);
    }
}
