//! Layer-wise MI probing of a trained model.
//!
//! For every probed sample the model is run once; each tapped
//! representation `T_i` is paired with the local features `X`
//! (representation 0, the input-projection output) and, when requested,
//! with the target `Y`. One fresh statistics network is trained per
//! `(sample, layer, side)` and the estimates are averaged per layer.

mod report;
mod trend;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mine::{average_values, estimate_mi_sample, log_transform, FeatureSequence, MIEstimate, MineConfig, Side};
use crate::models::{Model, SyntheticDataset, Target};
use crate::nn::DenseMatrix;
use crate::seeds::sub_seed;

pub use report::{FailureRecord, LayerProbeReport, SideReport, CSV_HEADER, LAYER_CONVENTION};
pub use trend::{classify_trend, smooth3, TrendLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub n_samples: usize,
    pub sides: Vec<Side>,
    pub mine: MineConfig,
    /// Representation indices to probe; `None` probes every encoder tap point
    /// and every decoder block. Representation 0 is always added.
    pub taps: Option<Vec<usize>>,
    pub seed: u64,
    /// Noise band for [`classify_trend`], in log-nats.
    pub noise_band: f64,
    /// Standardize every feature over the frames of its sample before
    /// estimation. The map is affine and invertible per feature, so it leaves
    /// MI unchanged and only evens out scales between layers.
    pub standardize: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            sides: vec![Side::InputSide],
            mine: MineConfig::default(),
            taps: None,
            seed: 0,
            noise_band: 0.1,
            standardize: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::Config("probe.n_samples must be at least 1".into()));
        }
        if self.sides.is_empty() {
            return Err(Error::Config("probe.sides must not be empty".into()));
        }
        if !(self.noise_band >= 0.0 && self.noise_band.is_finite()) {
            return Err(Error::Config("probe.noise_band must be non-negative".into()));
        }
        self.mine.validate()
    }
}

/// Seed of the statistics network for one `(sample, side)` pair.
///
/// Every layer of a sample shares it, so layers are compared under the same
/// initialization and the same frame batches.
pub fn estimate_seed(probe_seed: u64, sample_index: usize, side: Side) -> u64 {
    sub_seed(probe_seed, &format!("mine/sample{sample_index}/{}", side.as_str()))
}

pub fn sample_id(index: usize) -> String {
    format!("sample{index:05}")
}

/// Target representation `Y` for target-side probing: the features for
/// reconstruction, one-hot labels for classification.
pub fn target_features(target: &Target, class_count: usize) -> Result<FeatureSequence> {
    match target {
        Target::Features(f) => Ok(f.clone()),
        Target::Labels(y) => {
            FeatureSequence::new(DenseMatrix::from_fn(y.len(), class_count, |t, k| (y[t] == k) as u8 as f64))
        }
    }
}

/// Per-feature zero mean and unit variance over frames; constant features
/// become zero.
pub fn standardize_features(m: &DenseMatrix) -> DenseMatrix {
    let n = m.rows() as f64;
    let mut out = m.clone();
    for c in 0..m.cols() {
        let mean = (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / n;
        let var = (0..m.rows()).map(|r| (m.get(r, c) - mean).powi(2)).sum::<f64>() / n;
        let inv = if var > 1e-24 { 1.0 / var.sqrt() } else { 0.0 };
        for r in 0..m.rows() {
            out.set(r, c, (m.get(r, c) - mean) * inv);
        }
    }
    out
}

fn resolve_taps(model: &Model, cfg: &ProbeConfig) -> Result<Vec<usize>> {
    let mut taps = cfg.taps.clone().unwrap_or_else(|| model.probe_taps());
    taps.push(0);
    taps.sort_unstable();
    taps.dedup();
    if let Some(&bad) = taps.iter().find(|&&t| t >= model.depth()) {
        return Err(Error::Config(format!(
            "tap {bad} is out of range; the model has {} representations",
            model.depth()
        )));
    }
    Ok(taps)
}

struct Job {
    sample: usize,
    side: Side,
}

/// Estimates the MI-versus-depth curves of `model` on the first
/// `cfg.n_samples` samples of `data`.
///
/// Estimation runs on the current rayon pool. Results are merged by
/// `(sample, side, layer)` so the report does not depend on scheduling.
/// Failed samples are dropped from the averages when they make up less than
/// 10% of the work; the report then lists them in `failures`. More failures
/// abort with [`Error::PartialProbe`].
pub fn probe_layers(model: &Model, data: &SyntheticDataset, cfg: &ProbeConfig, config_hash: &str) -> Result<LayerProbeReport> {
    cfg.validate()?;
    model.validate()?;
    data.validate()?;
    if data.spec.feature_dim != model.spec.input_dim {
        return Err(Error::dimension("probe dataset width", model.spec.input_dim, data.spec.feature_dim));
    }
    if cfg.n_samples > data.len() {
        return Err(Error::Config(format!(
            "probe.n_samples {} exceeds the {} samples in the dataset",
            cfg.n_samples,
            data.len()
        )));
    }
    let taps = resolve_taps(model, cfg)?;
    let mut sides = cfg.sides.clone();
    sides.sort();
    sides.dedup();

    let jobs: Vec<Job> = (0..cfg.n_samples)
        .flat_map(|sample| sides.iter().map(move |&side| Job { sample, side }))
        .collect();
    let results: Vec<std::result::Result<Vec<MIEstimate>, (usize, String)>> = jobs
        .par_iter()
        .map(|job| run_job(model, data, cfg, &taps, job))
        .collect();

    let mut failures = Vec::new();
    let mut per_side: Vec<(Side, Vec<Vec<MIEstimate>>)> = sides.iter().map(|&s| (s, Vec::new())).collect();
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(est) => {
                let slot = per_side.iter_mut().find(|(s, _)| *s == job.side).expect("side listed");
                slot.1.push(est);
            }
            Err((layer, error)) => failures.push(FailureRecord {
                sample_id: sample_id(job.sample),
                layer_index: layer,
                side: job.side,
                error,
            }),
        }
    }
    let total = jobs.len() * taps.len();
    if !failures.is_empty() {
        log::warn!("{} of {} sample/side probes failed", failures.len(), jobs.len());
        if failures.len() * taps.len() * 10 >= total || per_side.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::PartialProbe {
                failed: failures.len() * taps.len(),
                total,
            });
        }
    }

    let mut side_reports = Vec::with_capacity(per_side.len());
    let mut estimates = Vec::new();
    for (side, samples) in per_side {
        let groups: Vec<Vec<f64>> = (0..taps.len())
            .map(|k| samples.iter().map(|s| s[k].value_nats).collect())
            .collect();
        let curve = log_transform(average_values(&groups)?);
        let trend_label = classify_trend(&curve.log_values, cfg.noise_band);
        side_reports.push(SideReport {
            side,
            curve,
            trend_label,
        });
        estimates.extend(samples.into_iter().flatten());
    }
    Ok(LayerProbeReport {
        config_hash: config_hash.to_string(),
        head: model.spec.head,
        layer_convention: LAYER_CONVENTION.to_string(),
        log_base: "e".into(),
        taps,
        noise_band: cfg.noise_band,
        sides: side_reports,
        estimates,
        failures,
    })
}

fn run_job(
    model: &Model,
    data: &SyntheticDataset,
    cfg: &ProbeConfig,
    taps: &[usize],
    job: &Job,
) -> std::result::Result<Vec<MIEstimate>, (usize, String)> {
    let sample = &data.samples[job.sample];
    let prep = |m: DenseMatrix| if cfg.standardize { standardize_features(&m) } else { m };
    let reps: Vec<DenseMatrix> = model
        .representations(sample.input.values())
        .map_err(|e| (taps[0], e.to_string()))?
        .into_iter()
        .map(prep)
        .collect();
    let reference = match job.side {
        Side::InputSide => FeatureSequence::new(reps[0].clone()),
        Side::TargetSide => target_features(&sample.target, data.class_count())
            .and_then(|y| FeatureSequence::new(prep(y.into_values()))),
    }
    .map_err(|e| (taps[0], e.to_string()))?;
    let mine = MineConfig {
        seed: estimate_seed(cfg.seed, job.sample, job.side),
        ..cfg.mine.clone()
    };
    let id = sample_id(job.sample);
    taps.iter()
        .map(|&layer| {
            let t = FeatureSequence::new(reps[layer].clone()).map_err(|e| (layer, e.to_string()))?;
            let (x, y) = match job.side {
                Side::InputSide => (&reference, &t),
                Side::TargetSide => (&t, &reference),
            };
            estimate_mi_sample(x, y, &mine)
                .map(|e| e.keyed(id.clone(), layer, job.side))
                .map_err(|e| (layer, e.to_string()))
        })
        .collect()
}
