use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, DenseMatrix, Op};
use crate::error::{Error, Result};

/// Row-wise affine map `y = x·Wᵀ + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub w: DenseMatrix,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            w: DenseMatrix::zeros(out_dim, in_dim),
            b: vec![0.0; out_dim],
        }
    }

    /// Uniform in `±scale/sqrt(in)` for weights; biases zero.
    pub fn init(out_dim: usize, in_dim: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let bound = scale / (in_dim as f64).sqrt();
        Self {
            w: DenseMatrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-bound..=bound)),
            b: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.out_dim(), self.in_dim())
    }

    pub fn check(&self, context: &str, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.in_dim() {
            return Err(Error::dimension(context, self.in_dim(), x.cols()));
        }
        if self.b.len() != self.out_dim() {
            return Err(Error::dimension(format!("{context} bias"), self.out_dim(), self.b.len()));
        }
        Ok(())
    }

    /// Applies the map to every row. Widths must already be validated.
    pub fn forward(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut y = DenseMatrix::zeros(x.rows(), self.out_dim());
        for r in 0..y.rows() {
            y.row_mut(r).copy_from_slice(&self.b);
        }
        gemm(1.0, x, Op::N, &self.w, Op::T, 1.0, &mut y);
        y
    }

    /// Single-row application.
    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out_dim())
            .map(|o| self.b[o] + self.w.row(o).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `∂/∂x`.
    pub fn backward(&self, x: &DenseMatrix, gy: &DenseMatrix, grad: &mut Affine) -> DenseMatrix {
        self.accumulate_param_grads(x, gy, grad);
        let mut gx = DenseMatrix::zeros(x.rows(), self.in_dim());
        gemm(1.0, gy, Op::N, &self.w, Op::N, 0.0, &mut gx);
        gx
    }

    pub fn accumulate_param_grads(&self, x: &DenseMatrix, gy: &DenseMatrix, grad: &mut Affine) {
        gemm(1.0, gy, Op::T, x, Op::N, 1.0, &mut grad.w);
        for row in gy.iter_rows() {
            for (g, v) in grad.b.iter_mut().zip(row) {
                *g += v;
            }
        }
    }

    pub fn push_tensors<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.push(self.w.data());
        out.push(&self.b);
    }

    pub fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(self.w.data_mut());
        out.push(&mut self.b);
    }
}
