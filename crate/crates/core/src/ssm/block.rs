use rand::Rng;
use serde::{Deserialize, Serialize};

use super::norm::{LayerNorm, NormCache};
use super::selective::{ScanCache, SelectiveSsm, SSM_TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::nn::{Affine, DenseMatrix, Parameters};

/// Bidirectional selective-scan block.
///
/// `x → norm → in_proj → (forward scan + time-reversed backward scan) →
/// out_proj (+ x when residual)`. This is a stand-in for a ConBiMamba layer:
/// it keeps bidirectionality, channel mixing and the residual path, and drops
/// the convolution and feed-forward sub-modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiMambaBlockParams {
    pub norm: LayerNorm,
    pub in_proj: Affine,
    pub forward: SelectiveSsm,
    pub backward: SelectiveSsm,
    pub out_proj: Affine,
    pub residual: bool,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    norm: NormCache,
    normed: DenseMatrix,
    fwd: ScanCache,
    bwd: ScanCache,
    summed: DenseMatrix,
}

impl BiMambaBlockParams {
    pub fn init(width: usize, state_dim: usize, residual: bool, rng: &mut impl Rng) -> Self {
        Self {
            norm: LayerNorm::identity(width),
            in_proj: Affine::init(width, width, 1.0, rng),
            forward: SelectiveSsm::init(width, state_dim, rng),
            backward: SelectiveSsm::init(width, state_dim, rng),
            out_proj: Affine::init(width, width, 0.5, rng),
            residual,
        }
    }

    /// Zeroed scans and output map with the residual on: the block is the
    /// identity.
    pub fn identity(width: usize, state_dim: usize) -> Self {
        Self {
            norm: LayerNorm::identity(width),
            in_proj: Affine::zeros(width, width),
            forward: SelectiveSsm::zeros(width, state_dim),
            backward: SelectiveSsm::zeros(width, state_dim),
            out_proj: Affine::zeros(width, width),
            residual: true,
        }
    }

    pub fn width(&self) -> usize {
        self.norm.width()
    }

    pub fn state_dim(&self) -> usize {
        self.forward.state_dim()
    }

    pub fn zeros_like(&self) -> Self {
        let (m, n) = (self.width(), self.state_dim());
        Self {
            norm: LayerNorm::zeros(m),
            in_proj: Affine::zeros(m, m),
            forward: SelectiveSsm::zeros(m, n),
            backward: SelectiveSsm::zeros(m, n),
            out_proj: Affine::zeros(m, m),
            residual: self.residual,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.width();
        let widths = [
            self.norm.bias.len(),
            self.in_proj.in_dim(),
            self.in_proj.out_dim(),
            self.forward.width(),
            self.backward.width(),
            self.out_proj.in_dim(),
            self.out_proj.out_dim(),
        ];
        if widths.iter().any(|&w| w != m) {
            return Err(Error::dimension("BiMamba block widths", m, format!("{widths:?}")));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &DenseMatrix) -> Result<(DenseMatrix, BlockCache)> {
        self.validate()?;
        if x.cols() != self.width() {
            return Err(Error::dimension("BiMamba block input width", self.width(), x.cols()));
        }
        let (normed, norm) = self.norm.forward_cached(x);
        let u = self.in_proj.forward(&normed);
        let (y_f, fwd) = self.forward.forward_cached(&u)?;
        let (y_b_rev, bwd) = self.backward.forward_cached(&u.reverse_rows())?;
        let mut summed = y_f;
        summed.add_assign(&y_b_rev.reverse_rows());
        let mut out = self.out_proj.forward(&summed);
        if self.residual {
            out.add_assign(x);
        }
        Ok((
            out,
            BlockCache {
                norm,
                normed,
                fwd,
                bwd,
                summed,
            },
        ))
    }

    /// Accumulates gradients into `grads`; returns `∂/∂x`.
    pub fn backward_pass(&self, cache: &BlockCache, g_out: &DenseMatrix, grads: &mut BiMambaBlockParams) -> DenseMatrix {
        let g_sum = self.out_proj.backward(&cache.summed, g_out, &mut grads.out_proj);
        let mut g_u = self.forward.backward(&cache.fwd, &g_sum, &mut grads.forward);
        let g_u_rev = self.backward.backward(&cache.bwd, &g_sum.reverse_rows(), &mut grads.backward);
        g_u.add_assign(&g_u_rev.reverse_rows());
        let g_normed = self.in_proj.backward(&cache.normed, &g_u, &mut grads.in_proj);
        let mut g_x = self.norm.backward(&cache.norm, &g_normed, &mut grads.norm);
        if self.residual {
            g_x.add_assign(g_out);
        }
        g_x
    }

    pub(crate) fn push_tensors<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        out.push(&self.norm.gain);
        out.push(&self.norm.bias);
        self.in_proj.push_tensors(out);
        self.forward.push_tensors(out);
        self.backward.push_tensors(out);
        self.out_proj.push_tensors(out);
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.norm.gain);
        out.push(&mut self.norm.bias);
        self.in_proj.push_tensors_mut(out);
        self.forward.push_tensors_mut(out);
        self.backward.push_tensors_mut(out);
        self.out_proj.push_tensors_mut(out);
    }

    pub(crate) const TENSOR_COUNT: usize = 4 + 2 * SSM_TENSOR_NAMES.len() + 2;

    pub(crate) fn tensor_label(index: usize) -> String {
        let n = SSM_TENSOR_NAMES.len();
        match index {
            0 => "norm.gain".into(),
            1 => "norm.bias".into(),
            2 => "in_proj.w".into(),
            3 => "in_proj.b".into(),
            i if i < 4 + n => format!("forward.{}", SSM_TENSOR_NAMES[i - 4]),
            i if i < 4 + 2 * n => format!("backward.{}", SSM_TENSOR_NAMES[i - 4 - n]),
            i if i == 4 + 2 * n => "out_proj.w".into(),
            _ => "out_proj.b".into(),
        }
    }
}

impl Parameters for BiMambaBlockParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(Self::TENSOR_COUNT);
        self.push_tensors(&mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(Self::TENSOR_COUNT);
        self.push_tensors_mut(&mut out);
        out
    }

    fn tensor_name(&self, index: usize) -> String {
        Self::tensor_label(index)
    }
}

/// Applies one block to a frame sequence.
pub fn bimamba_block(params: &BiMambaBlockParams, sequence: &DenseMatrix) -> Result<DenseMatrix> {
    params.forward(sequence)
}
