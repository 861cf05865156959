use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Sample, SyntheticDataset, Target};
use super::model::Model;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState, DenseMatrix, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sequences whose gradients are averaged per optimizer step.
    pub batch_sequences: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Seeds the per-epoch sample order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_sequences: 8,
            learning_rate: 3e-3,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_sequences < 1 {
            return Err(Error::Config("train.batch_sequences must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::Config("train.clip_norm must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean training loss of every epoch, computed before each update.
    pub loss_history: Vec<f64>,
    pub steps: usize,
}

/// Mean squared error over all entries, and its gradient.
pub fn mse_loss(pred: &DenseMatrix, target: &DenseMatrix) -> (f64, DenseMatrix) {
    let n = pred.data().len() as f64;
    let mut grad = pred.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    (loss / n, grad)
}

/// Mean per-frame softmax cross-entropy, and its gradient with respect to
/// the logits.
pub fn cross_entropy_loss(logits: &DenseMatrix, labels: &[usize]) -> (f64, DenseMatrix) {
    let frames = logits.rows() as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for (k, v) in row.iter_mut().enumerate() {
            let p = (*v - log_z).exp();
            *v = (p - if k == y { 1.0 } else { 0.0 }) / frames;
        }
    }
    (loss / frames, grad)
}

/// Loss of one sample and its gradient with respect to the prediction.
pub fn sample_loss(prediction: &DenseMatrix, sample: &Sample) -> (f64, DenseMatrix) {
    match &sample.target {
        Target::Features(f) => mse_loss(prediction, f.values()),
        Target::Labels(y) => cross_entropy_loss(prediction, y),
    }
}

/// Mean loss of `model` over `samples` without training.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(&model.predict(s.input.values())?, s).0;
    }
    Ok(total / samples.len().max(1) as f64)
}

fn clip(grads: &mut Model, max_norm: f64) {
    if max_norm == 0.0 {
        return;
    }
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Trains `model` in place with Adam on minibatches of whole sequences.
///
/// Sample order is reshuffled every epoch from `cfg.seed`. Each epoch's
/// recorded loss is the mean of the per-sample losses seen during it.
pub fn train_task(model: &mut Model, data: &SyntheticDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    data.validate()?;
    if model.spec.head.task() != data.task() {
        return Err(Error::Usage(format!(
            "a {} head cannot train on a {:?} dataset",
            model.spec.head.as_str(),
            data.task()
        )));
    }
    if model.spec.input_dim != data.spec.feature_dim {
        return Err(Error::dimension("model input width", model.spec.input_dim, data.spec.feature_dim));
    }
    if model.spec.head.task() == super::TaskKind::Classification && model.spec.class_count != data.class_count() {
        return Err(Error::dimension("model class count", model.spec.class_count, data.class_count()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamState::new(
        model,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_sequences) {
            let mut grads = model.zeros_like();
            for &i in chunk {
                let sample = &data.samples[i];
                let cache = model.forward_cached(sample.input.values()).map_err(|e| attach(e, &history))?;
                let (loss, mut g) = sample_loss(&cache.prediction, sample);
                if !loss.is_finite() {
                    let mut h = history.clone();
                    h.push(loss);
                    return Err(Error::Numeric {
                        context: "train_task".into(),
                        detail: format!("non-finite loss in epoch {epoch}"),
                        history: h,
                    });
                }
                epoch_loss += loss;
                g.scale(1.0 / chunk.len() as f64);
                model.backward(&cache, &g, &mut grads);
            }
            clip(&mut grads, cfg.clip_norm);
            adam_step(model, &grads, &mut opt).map_err(|e| attach(e, &history))?;
            steps += 1;
        }
        let mean = epoch_loss / data.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(TrainOutcome {
        loss_history: history,
        steps,
    })
}

fn attach(e: Error, history: &[f64]) -> Error {
    match e {
        Error::Numeric { context, detail, .. } => Error::Numeric {
            context,
            detail,
            history: history.to_vec(),
        },
        other => other,
    }
}
