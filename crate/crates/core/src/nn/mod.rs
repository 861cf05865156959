//! Dense numerical kernel: matrices, a scalar-output MLP with manual
//! backpropagation, and Adam.

mod adam;
mod affine;
mod matrix;
mod mlp;

pub use affine::Affine;
pub use adam::{adam_step, AdamConfig, AdamState, Parameters};
pub use matrix::{gemm, DenseMatrix, Op};
pub use mlp::{Activation, ForwardCache, MlpParams, StatisticsNetwork};
