//! Mutual information neural estimation between paired frame sequences.
//!
//! For local features `X` and a representation `T` of the same `L` frames,
//! `I(X; T) = KL(P(X,T) ‖ P(X)⊗P(T))`. The Donsker–Varadhan representation
//! turns this into a supremum over score functions `ψ`:
//!
//! ```text
//! I(X; T) ≥ E_joint[ψ] − ln E_marginal[e^ψ]
//! ```
//!
//! which is maximized by training a small MLP on frame pairs. Joint pairs are
//! the aligned frames `(x_j, t_j)`; marginal pairs re-pair frames through a
//! random derangement within the same sample. Estimates are in nats.

mod curve;
mod estimator;
mod objective;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

pub(crate) use curve::average_values;
pub use curve::{average_mi, log_transform, AveragedCurve, LOG_FLOOR};
pub use estimator::{estimate_mi_sample, MIEstimate, MineConfig, Side};
pub use objective::{dv_objective, marginal_permutation, mine_gradient, shuffle_marginal, MineGradient, SCORE_CLAMP};

/// `L × D` frame features. At least two frames, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseMatrix", into = "DenseMatrix")]
pub struct FeatureSequence {
    values: DenseMatrix,
}

impl FeatureSequence {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::Degenerate(format!(
                "feature sequences need at least 2 frames, got {}",
                values.rows()
            )));
        }
        if values.cols() == 0 {
            return Err(Error::Degenerate("feature sequences need at least one feature".into()));
        }
        if !values.is_finite() {
            return Err(Error::numeric("FeatureSequence::new", "non-finite feature value"));
        }
        Ok(Self { values })
    }

    /// Frame count `L`.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Feature width `D`.
    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn into_values(self) -> DenseMatrix {
        self.values
    }
}

impl TryFrom<DenseMatrix> for FeatureSequence {
    type Error = Error;

    fn try_from(m: DenseMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<FeatureSequence> for DenseMatrix {
    fn from(f: FeatureSequence) -> Self {
        f.values
    }
}
