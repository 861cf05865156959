use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseMatrix, MlpParams};

use super::objective::{check_paired, dv_objective, marginal_permutation, mine_gradient, negate, SCORE_CLAMP};
use super::FeatureSequence;

/// Budget and topology of one estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineConfig {
    /// Frames per joint batch (and per marginal batch).
    pub batch_size: usize,
    pub train_steps: usize,
    /// Decay of the moving average in the gradient denominator; 0 gives the
    /// plain batch estimator.
    pub ema_decay: f64,
    pub eval_batches: usize,
    pub seed: u64,
    /// Hidden widths of the statistics network; input and output widths are
    /// implied by the data.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    /// Number of points kept from the training objective trace.
    pub curve_points: usize,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            train_steps: 2000,
            ema_decay: 0.99,
            eval_batches: 32,
            seed: 0,
            hidden: vec![256, 256],
            activation: Activation::Elu,
            learning_rate: 1e-4,
            curve_points: 50,
        }
    }
}

impl MineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("mine.batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "mine.ema_decay must lie in [0, 1), got {}",
                self.ema_decay
            )));
        }
        if self.eval_batches < 1 {
            return Err(Error::Config("mine.eval_batches must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("mine.hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("mine.learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn topology(&self, input_width: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_width);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(1);
        sizes
    }
}

/// Which pair of variables an estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `I(X; T_i)`: local input features against layer `i`.
    InputSide,
    /// `I(T_i; Y)`: layer `i` against the target representation.
    TargetSide,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::InputSide => "input_side",
            Side::TargetSide => "target_side",
        }
    }
}

/// A converged estimate for one `(sample, layer, side)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value_nats: f64,
    pub layer_index: usize,
    pub side: Side,
    pub sample_id: String,
    /// Window means of the training objective.
    pub final_loss_curve: Vec<f64>,
    pub clamp_events: usize,
}

impl MIEstimate {
    pub fn keyed(mut self, sample_id: impl Into<String>, layer_index: usize, side: Side) -> Self {
        self.sample_id = sample_id.into();
        self.layer_index = layer_index;
        self.side = side;
        self
    }
}

fn paired_batch(
    x: &DenseMatrix,
    t: &DenseMatrix,
    rows: &[usize],
    perm: Option<&[usize]>,
) -> DenseMatrix {
    let (dx, dt) = (x.cols(), t.cols());
    let mut data = Vec::with_capacity(rows.len() * (dx + dt));
    for &j in rows {
        data.extend_from_slice(x.row(j));
        let tj = perm.map_or(j, |p| p[j]);
        data.extend_from_slice(t.row(tj));
    }
    DenseMatrix::from_vec(rows.len(), dx + dt, data).expect("sized above")
}

fn draw_batches(
    x: &DenseMatrix,
    t: &DenseMatrix,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let len = x.rows();
    let joint_rows = index::sample(rng, len, batch).into_vec();
    let perm = marginal_permutation(len, rng)?;
    let marginal_rows = index::sample(rng, len, batch).into_vec();
    Ok((
        paired_batch(x, t, &joint_rows, None),
        paired_batch(x, t, &marginal_rows, Some(&perm)),
    ))
}

fn window_means(trace: &[f64], points: usize) -> Vec<f64> {
    if trace.is_empty() || points == 0 {
        return Vec::new();
    }
    let stride = trace.len().div_ceil(points);
    trace
        .chunks(stride)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

/// Trains a fresh statistics network on frame pairs of `x` and `t` and
/// returns the bound averaged over freshly drawn evaluation batches.
///
/// The returned estimate carries an empty key; callers attach one with
/// [`MIEstimate::keyed`].
pub fn estimate_mi_sample(x: &FeatureSequence, t: &FeatureSequence, cfg: &MineConfig) -> Result<MIEstimate> {
    cfg.validate()?;
    check_paired(x, t)?;
    if cfg.batch_size > x.len() {
        return Err(Error::Config(format!(
            "mine.batch_size {} exceeds the {} frames of the sample",
            cfg.batch_size,
            x.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sizes = cfg.topology(x.dim() + t.dim());
    let mut net = MlpParams::init(&sizes, cfg.activation, &mut rng)?;
    let mut opt = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );

    let (xv, tv) = (x.values(), t.values());
    let mut ema = None;
    let mut trace = Vec::with_capacity(cfg.train_steps);
    let mut clamp_events = 0;
    for step in 0..cfg.train_steps {
        let (joint, marginal) = draw_batches(xv, tv, cfg.batch_size, &mut rng)?;
        let mut g = mine_gradient(&joint, &marginal, &net, ema, cfg.ema_decay).map_err(|e| with_history(e, &trace))?;
        if !g.objective.is_finite() {
            trace.push(g.objective);
            return Err(Error::Numeric {
                context: "estimate_mi_sample".into(),
                detail: format!("objective diverged at step {step}"),
                history: trace,
            });
        }
        trace.push(g.objective);
        clamp_events += g.clamp_events;
        ema = Some(g.ema);
        negate(&mut g.grads);
        adam_step(&mut net, &g.grads, &mut opt).map_err(|e| with_history(e, &trace))?;
    }

    let mut total = 0.0;
    for _ in 0..cfg.eval_batches {
        let (joint, marginal) = draw_batches(xv, tv, cfg.batch_size, &mut rng)?;
        let clamp = |s: Vec<f64>, events: &mut usize| -> Vec<f64> {
            s.into_iter()
                .map(|v| {
                    let c = v.clamp(-SCORE_CLAMP, SCORE_CLAMP);
                    *events += (c != v) as usize;
                    c
                })
                .collect()
        };
        let js = clamp(net.forward(&joint)?, &mut clamp_events);
        let ms = clamp(net.forward(&marginal)?, &mut clamp_events);
        total += dv_objective(&js, &ms)?;
    }
    let value = total / cfg.eval_batches as f64;
    if !value.is_finite() {
        return Err(Error::Numeric {
            context: "estimate_mi_sample".into(),
            detail: "evaluation produced a non-finite bound".into(),
            history: trace,
        });
    }
    Ok(MIEstimate {
        value_nats: value,
        layer_index: 0,
        side: Side::InputSide,
        sample_id: String::new(),
        final_loss_curve: window_means(&trace, cfg.curve_points),
        clamp_events,
    })
}

fn with_history(e: Error, trace: &[f64]) -> Error {
    match e {
        Error::Numeric { context, detail, .. } => Error::Numeric {
            context,
            detail,
            history: trace.to_vec(),
        },
        other => other,
    }
}
