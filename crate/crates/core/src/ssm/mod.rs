//! State-space sequence kernels.
//!
//! The continuous system `h' = A h + B x`, `y = C h + D x` is discretized by
//! zero-order hold for the time-invariant path. The selective scan makes
//! `Δ`, `B` and `C` functions of the current frame and uses the Euler input
//! term `Δ_t·B_t`. `A` is diagonal throughout; `D` acts as a per-channel
//! residual connection.

mod block;
mod discrete;
mod norm;
mod selective;

pub use block::{bimamba_block, BiMambaBlockParams, BlockCache};
pub use discrete::{discretize_zoh, ssm_scan, ssm_step, zoh_entry, ContinuousSSM, DiscreteSSM};
pub use norm::LayerNorm;
pub use selective::{frozen_equivalent, selective_params, selective_scan, ScanCache, SelectiveProjections, SelectiveSsm};
