use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mine::FeatureSequence;
use crate::nn::DenseMatrix;

/// What a dataset asks the model to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Target is the input itself.
    Reconstruction,
    /// Target is the codeword identity of every frame.
    Classification,
}

/// Generation parameters for [`gen_synthetic_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSpec {
    pub task: TaskKind,
    pub n_samples: usize,
    /// Frames per sample `L`.
    pub seq_len: usize,
    /// Feature width `D`.
    pub feature_dim: usize,
    /// Number of codewords `K`.
    pub class_count: usize,
    /// Segment lengths are drawn uniformly from `segment_min..=segment_max`.
    pub segment_min: usize,
    pub segment_max: usize,
    /// Damped sinusoids added to every sample.
    pub sinusoids: usize,
    /// Overall scale of the sinusoid component; 0 leaves only codewords.
    pub sinusoid_amplitude: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            task: TaskKind::Reconstruction,
            n_samples: 200,
            seq_len: 128,
            feature_dim: 16,
            class_count: 8,
            segment_min: 8,
            segment_max: 24,
            sinusoids: 3,
            sinusoid_amplitude: 1.5,
        }
    }
}

impl DataSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Usage(m));
        if self.seq_len < 32 {
            return fail(format!("seq_len must be at least 32, got {}", self.seq_len));
        }
        if self.feature_dim < 4 {
            return fail(format!("feature_dim must be at least 4, got {}", self.feature_dim));
        }
        if self.n_samples < 1 {
            return fail("n_samples must be at least 1".into());
        }
        if self.class_count < 2 {
            return fail(format!("class_count must be at least 2, got {}", self.class_count));
        }
        if self.segment_min < 1 || self.segment_max < self.segment_min {
            return fail(format!(
                "segment lengths must satisfy 1 ≤ min ≤ max, got {}..={}",
                self.segment_min, self.segment_max
            ));
        }
        if !(self.sinusoid_amplitude >= 0.0 && self.sinusoid_amplitude.is_finite()) {
            return fail("sinusoid_amplitude must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Features(FeatureSequence),
    Labels(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: FeatureSequence,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub spec: DataSpec,
    pub seed: u64,
    /// `K × D`, one codeword per row.
    pub codewords: DenseMatrix,
    pub samples: Vec<Sample>,
}

impl SyntheticDataset {
    pub fn task(&self) -> TaskKind {
        self.spec.task
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks the shared-shape and label-range invariants.
    pub fn validate(&self) -> Result<()> {
        let (l, d) = (self.spec.seq_len, self.spec.feature_dim);
        for (i, s) in self.samples.iter().enumerate() {
            if s.input.len() != l || s.input.dim() != d {
                return Err(Error::dimension(
                    format!("dataset sample {i}"),
                    format!("{l}×{d}"),
                    format!("{}×{}", s.input.len(), s.input.dim()),
                ));
            }
            match (&s.target, self.spec.task) {
                (Target::Features(f), TaskKind::Reconstruction) if f.values().shape() == (l, d) => {}
                (Target::Labels(y), TaskKind::Classification) if y.len() == l => {
                    if let Some(bad) = y.iter().find(|&&c| c >= self.spec.class_count) {
                        return Err(Error::Usage(format!(
                            "sample {i} has label {bad} outside 0..{}",
                            self.spec.class_count
                        )));
                    }
                }
                _ => return Err(Error::Usage(format!("sample {i} target does not match the task"))),
            }
        }
        Ok(())
    }
}

fn draw_segments(rng: &mut ChaCha8Rng, spec: &DataSpec) -> Vec<usize> {
    let mut labels = Vec::with_capacity(spec.seq_len);
    while labels.len() < spec.seq_len {
        let len = rng.random_range(spec.segment_min..=spec.segment_max);
        let class = rng.random_range(0..spec.class_count);
        labels.extend(std::iter::repeat_n(class, len.min(spec.seq_len - labels.len())));
    }
    labels
}

fn add_sinusoids(rng: &mut ChaCha8Rng, spec: &DataSpec, x: &mut DenseMatrix) {
    let per = spec.sinusoid_amplitude / (spec.sinusoids.max(1) as f64).sqrt();
    for _ in 0..spec.sinusoids {
        let omega = rng.random_range(0.05..0.5);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let decay = rng.random_range(0.0..0.02);
        let amp: Vec<f64> = (0..spec.feature_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                per * z
            })
            .collect();
        for t in 0..spec.seq_len {
            let s = (-decay * t as f64).exp() * (omega * t as f64 + phase).sin();
            for (v, a) in x.row_mut(t).iter_mut().zip(&amp) {
                *v += a * s;
            }
        }
    }
}

/// Builds a seeded dataset of codeword segments plus damped sinusoids.
///
/// Each sample is a run of constant-codeword segments (codewords are shared
/// by the whole dataset and drawn from a standard normal) with a sum of
/// randomly damped sinusoids on top. Reconstruction targets are the inputs;
/// classification targets are the per-frame codeword indices.
pub fn gen_synthetic_dataset(spec: &DataSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codewords = DenseMatrix::from_fn(spec.class_count, spec.feature_dim, |_, _| StandardNormal.sample(&mut rng));
    let mut samples = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let labels = draw_segments(&mut rng, spec);
        let mut x = DenseMatrix::from_fn(spec.seq_len, spec.feature_dim, |t, d| codewords.get(labels[t], d));
        add_sinusoids(&mut rng, spec, &mut x);
        let input = FeatureSequence::new(x)?;
        let target = match spec.task {
            TaskKind::Reconstruction => Target::Features(input.clone()),
            TaskKind::Classification => Target::Labels(labels),
        };
        samples.push(Sample { input, target });
    }
    Ok(SyntheticDataset {
        spec: spec.clone(),
        seed,
        codewords,
        samples,
    })
}
