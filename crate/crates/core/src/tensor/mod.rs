//! Dense row-major matrices and a tape-based reverse-mode autodiff.
//!
//! Every tensor is two-dimensional; vectors are `1 x n` rows. A [`Graph`]
//! records the operations of one forward pass (rebuilt per sentence) and
//! [`Graph::backward`] walks it in reverse.

mod graph;
pub mod math;
mod optim;
mod params;
mod rng;

use alloc::vec::Vec;

use crate::Real;

pub use graph::{Gradients, Graph, Var};
pub use optim::{sgd_step, LrSchedule};
pub use params::{Grads, ParamId, ParamStore};
pub use rng::{derive_seed, seeded_rng, uniform_tensor, Rng, INIT_SCALE};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<Real>,
}

impl Tensor {
    #[track_caller]
    pub fn new(rows: usize, cols: usize, data: Vec<Real>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length does not match shape [{rows}, {cols}]");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, 0.0)
    }

    pub fn full(rows: usize, cols: usize, v: Real) -> Self {
        Tensor { rows, cols, data: alloc::vec![v; rows * cols] }
    }

    pub fn row_vector(data: &[Real]) -> Self {
        Tensor { rows: 1, cols: data.len(), data: data.to_vec() }
    }

    pub fn scalar(v: Real) -> Self {
        Tensor { rows: 1, cols: 1, data: alloc::vec![v] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Real {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[Real] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [Real] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a `1 x 1` tensor.
    #[track_caller]
    pub fn item(&self) -> Real {
        assert_eq!(self.data.len(), 1, "item() on a tensor of shape {:?}", self.shape());
        self.data[0]
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Tensor, scale: Real) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scaled(&self, s: Real) -> Tensor {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn sum_squares(&self) -> Real {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `out += a · b` for row-major `a: m x k`, `b: k x n`, `out: m x n`.
pub(crate) fn matmul_acc(a: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// `out += g · bᵀ` for `g: m x n`, `b: k x n`, `out: m x k`.
pub(crate) fn matmul_bt_acc(g: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (x, y) in g_row.iter().zip(b_row) {
                s += x * y;
            }
            out[i * k + p] += s;
        }
    }
}

/// `out += aᵀ · g` for `a: m x k`, `g: m x n`, `out: k x n`.
pub(crate) fn matmul_at_acc(a: &[Real], g: &[Real], out: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += aip * gv;
            }
        }
    }
}
