use serde::{Deserialize, Serialize};

use crate::nn::DenseMatrix;

pub const NORM_EPS: f64 = 1e-5;

/// Per-frame layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NormCache {
    x_hat: DenseMatrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn identity(width: usize) -> Self {
        Self {
            gain: vec![1.0; width],
            bias: vec![0.0; width],
        }
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            gain: vec![0.0; width],
            bias: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.gain.len()
    }

    pub fn forward_cached(&self, x: &DenseMatrix) -> (DenseMatrix, NormCache) {
        let w = x.cols() as f64;
        let mut x_hat = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x_hat.row_mut(r);
            let mean = row.iter().sum::<f64>() / w;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let mut y = x_hat.clone();
        for r in 0..y.rows() {
            for ((v, g), b) in y.row_mut(r).iter_mut().zip(&self.gain).zip(&self.bias) {
                *v = *v * g + b;
            }
        }
        (y, NormCache { x_hat, inv_std })
    }

    pub fn forward(&self, x: &DenseMatrix) -> DenseMatrix {
        self.forward_cached(x).0
    }

    /// Accumulates gain/bias gradients into `grads`; returns `∂/∂x`.
    pub fn backward(&self, cache: &NormCache, gy: &DenseMatrix, grads: &mut LayerNorm) -> DenseMatrix {
        let w = gy.cols() as f64;
        let mut gx = DenseMatrix::zeros(gy.rows(), gy.cols());
        let mut g_hat = vec![0.0; gy.cols()];
        for r in 0..gy.rows() {
            let xh = cache.x_hat.row(r);
            let g = gy.row(r);
            for k in 0..g.len() {
                grads.gain[k] += g[k] * xh[k];
                grads.bias[k] += g[k];
                g_hat[k] = g[k] * self.gain[k];
            }
            let mean_g = g_hat.iter().sum::<f64>() / w;
            let mean_gx = g_hat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / w;
            let is = cache.inv_std[r];
            for (k, out) in gx.row_mut(r).iter_mut().enumerate() {
                *out = is * (g_hat[k] - mean_g - xh[k] * mean_gx);
            }
        }
        gx
    }
}
