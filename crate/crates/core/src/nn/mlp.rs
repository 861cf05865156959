use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Parameters;
use super::matrix::{gemm, DenseMatrix, Op};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
        }
    }
}

/// Dense feed-forward network producing one scalar per input row.
///
/// `weights[k]` has shape `layer_sizes[k+1] × layer_sizes[k]`. Hidden layers
/// use `activation`; the output layer is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

/// Intermediate values of one forward pass, consumed by [`MlpParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `pre[k]` is the affine output of layer `k`.
    pre: Vec<DenseMatrix>,
    /// `post[0]` is the input batch; `post[k+1]` the activation of layer `k`.
    post: Vec<DenseMatrix>,
}

impl ForwardCache {
    pub fn scores(&self) -> &[f64] {
        self.pre.last().map(|m| m.data()).unwrap_or(&[])
    }

    pub fn batch_rows(&self) -> usize {
        self.post[0].rows()
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Usage(format!(
            "an MLP needs at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Usage(format!("zero-width layer in {layer_sizes:?}")));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::Usage(format!(
            "statistics network must end in a single scalar, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl MlpParams {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(layer_sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(DenseMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.random_range(-bound..=bound)
            }));
            biases.push((0..fan_out).map(|_| rng.random_range(-bound..=bound)).collect());
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn seeded(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::init(layer_sizes, activation, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes
                .windows(2)
                .map(|w| DenseMatrix::zeros(w[1], w[0]))
                .collect(),
            biases: layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
            activation,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.layer_sizes, self.activation).expect("validated at construction")
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    fn check_batch(&self, batch: &DenseMatrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::dimension("mlp layer 0 input width", self.input_dim(), batch.cols()));
        }
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (out, inp) = (self.layer_sizes[k + 1], self.layer_sizes[k]);
            if w.shape() != (out, inp) {
                return Err(Error::dimension(
                    format!("mlp layer {k} weight"),
                    format!("{out}x{inp}"),
                    format!("{}x{}", w.rows(), w.cols()),
                ));
            }
            if b.len() != out {
                return Err(Error::dimension(format!("mlp layer {k} bias"), out, b.len()));
            }
        }
        Ok(())
    }

    fn affine(&self, k: usize, input: &DenseMatrix) -> DenseMatrix {
        let w = &self.weights[k];
        let mut z = DenseMatrix::zeros(input.rows(), w.rows());
        for r in 0..z.rows() {
            z.row_mut(r).copy_from_slice(&self.biases[k]);
        }
        gemm(1.0, input, Op::N, w, Op::T, 1.0, &mut z);
        z
    }

    /// Scores every row of `batch`.
    pub fn forward(&self, batch: &DenseMatrix) -> Result<Vec<f64>> {
        Ok(self.forward_cached(batch)?.pre.pop().unwrap().into_data())
    }

    /// Forward pass that keeps what [`Self::backward`] needs.
    pub fn forward_cached(&self, batch: &DenseMatrix) -> Result<ForwardCache> {
        self.check_batch(batch)?;
        let n_layers = self.weights.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post = Vec::with_capacity(n_layers);
        post.push(batch.clone());
        for k in 0..n_layers {
            let z = self.affine(k, post.last().unwrap());
            if k + 1 < n_layers {
                let mut a = z.clone();
                let act = self.activation;
                a.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
                post.push(a);
            }
            pre.push(z);
        }
        let cache = ForwardCache { pre, post };
        if let Some(i) = cache.scores().iter().position(|s| !s.is_finite()) {
            return Err(Error::numeric("mlp_forward", format!("non-finite score at row {i}")));
        }
        Ok(cache)
    }

    /// Gradient of `Σ upstream[i]·score[i]` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<MlpParams> {
        let rows = cache.batch_rows();
        if cache.pre.len() != self.weights.len() || cache.post[0].cols() != self.input_dim() {
            return Err(Error::Usage(
                "forward cache was produced by a different network".into(),
            ));
        }
        if upstream.len() != rows {
            return Err(Error::dimension("mlp_backward upstream length", rows, upstream.len()));
        }
        let mut grads = self.zeros_like();
        let mut delta = DenseMatrix::from_vec(rows, 1, upstream.to_vec())?;
        for k in (0..self.weights.len()).rev() {
            let input = &cache.post[k];
            gemm(1.0, &delta, Op::T, input, Op::N, 0.0, &mut grads.weights[k]);
            let gb = &mut grads.biases[k];
            for row in delta.iter_rows() {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if k == 0 {
                break;
            }
            let mut d_input = DenseMatrix::zeros(rows, self.layer_sizes[k]);
            gemm(1.0, &delta, Op::N, &self.weights[k], Op::N, 0.0, &mut d_input);
            let act = self.activation;
            let z = cache.pre[k - 1].data();
            let a = cache.post[k].data();
            for (i, d) in d_input.data_mut().iter_mut().enumerate() {
                *d *= act.derivative(z[i], a[i]);
            }
            delta = d_input;
        }
        Ok(grads)
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.data_mut());
            out.push(b.as_mut_slice());
        }
        out
    }

    fn tensor_name(&self, index: usize) -> String {
        let kind = if index % 2 == 0 { "weights" } else { "biases" };
        format!("layer {} {kind}", index / 2)
    }
}

/// An MLP together with the cache of its most recent training forward pass.
#[derive(Debug, Clone)]
pub struct StatisticsNetwork {
    pub params: MlpParams,
    cache: Option<ForwardCache>,
}

impl StatisticsNetwork {
    pub fn new(params: MlpParams) -> Self {
        Self { params, cache: None }
    }

    pub fn forward_train(&mut self, batch: &DenseMatrix) -> Result<&[f64]> {
        self.cache = Some(self.params.forward_cached(batch)?);
        Ok(self.cache.as_ref().unwrap().scores())
    }

    /// Backpropagates through the cached pass and drops the cache.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<MlpParams> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("mlp_backward called without a forward cache".into()))?;
        self.params.backward(&cache, upstream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_scores_zero() {
        let p = MlpParams::zeros(&[3, 4, 1], Activation::Elu).unwrap();
        let batch = DenseMatrix::from_fn(5, 3, |i, j| i as f64 - j as f64);
        assert_eq!(p.forward(&batch).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn single_affine_layer() {
        let mut p = MlpParams::zeros(&[1, 1], Activation::Relu).unwrap();
        p.weights[0].set(0, 0, 2.0);
        p.biases[0][0] = 1.0;
        let batch = DenseMatrix::from_vec(1, 1, vec![3.0]).unwrap();
        assert_eq!(p.forward(&batch).unwrap(), vec![7.0]);

        let cache = p.forward_cached(&batch).unwrap();
        let g = p.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.weights[0].get(0, 0), 3.0);
        assert_eq!(g.biases[0][0], 1.0);
    }

    #[test]
    fn seeded_relu_net_matches_scalar_reference() {
        let p = MlpParams::seeded(&[2, 3, 1], Activation::Relu, 42).unwrap();
        let x = [1.0, -1.0];
        let mut hidden = [0.0; 3];
        for j in 0..3 {
            let mut z = p.biases[0][j];
            for i in 0..2 {
                z += p.weights[0].get(j, i) * x[i];
            }
            hidden[j] = if z > 0.0 { z } else { 0.0 };
        }
        let mut score = p.biases[1][0];
        for j in 0..3 {
            score += p.weights[1].get(0, j) * hidden[j];
        }
        let batch = DenseMatrix::from_vec(1, 2, x.to_vec()).unwrap();
        let got = p.forward(&batch).unwrap()[0];
        assert!((got - score).abs() < 1e-14, "{got} vs {score}");
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let p = MlpParams::seeded(&[2, 5, 1], Activation::Elu, 1).unwrap();
        let batch = DenseMatrix::from_fn(4, 2, |i, j| (i + j) as f64 * 0.1);
        let cache = p.forward_cached(&batch).unwrap();
        let g = p.backward(&cache, &[0.0; 4]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let mut p = MlpParams::seeded(&[2, 3, 1], Activation::Elu, 0).unwrap();
        let bad = DenseMatrix::zeros(2, 5);
        let msg = p.forward(&bad).unwrap_err().to_string();
        assert!(msg.contains("layer 0"), "{msg}");
        p.weights[1] = DenseMatrix::zeros(1, 2);
        let msg = p.forward(&DenseMatrix::zeros(1, 2)).unwrap_err().to_string();
        assert!(msg.contains("layer 1"), "{msg}");
    }

    #[test]
    fn backward_without_cache_is_usage_error() {
        let mut net = StatisticsNetwork::new(MlpParams::seeded(&[2, 3, 1], Activation::Elu, 0).unwrap());
        assert!(matches!(net.backward(&[1.0]), Err(Error::Usage(_))));
        net.forward_train(&DenseMatrix::zeros(1, 2)).unwrap();
        assert!(net.backward(&[1.0]).is_ok());
        assert!(matches!(net.backward(&[1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn invalid_topologies_are_rejected() {
        assert!(MlpParams::zeros(&[3], Activation::Elu).is_err());
        assert!(MlpParams::zeros(&[3, 0, 1], Activation::Elu).is_err());
        assert!(MlpParams::zeros(&[3, 4, 2], Activation::Elu).is_err());
    }
}
