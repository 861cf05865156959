use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, MlpParams, Parameters};

use super::FeatureSequence;

/// Raw statistics-network outputs are clamped to this range before
/// exponentiation.
pub const SCORE_CLAMP: f64 = 50.0;

/// A uniformly random permutation `π` of `0..len` with no fixed points.
///
/// Durstenfeld's Fisher–Yates shuffle (`i` from `len−1` down to 1, partner
/// drawn from `0..=i`) is repeated until the draw is a derangement. About
/// `e` draws are needed on average, and the accepted draw is uniform over
/// all derangements.
pub fn marginal_permutation(len: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if len < 2 {
        return Err(Error::Degenerate(format!(
            "marginal shuffling needs at least 2 frames, got {len}"
        )));
    }
    let mut perm: Vec<usize> = (0..len).collect();
    loop {
        for (j, p) in perm.iter_mut().enumerate() {
            *p = j;
        }
        for i in (1..len).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        if perm.iter().enumerate().all(|(j, &p)| p != j) {
            return Ok(perm);
        }
    }
}

/// Pairs every frame `x_j` with `t_{π(j)}` for a random derangement `π`,
/// realizing samples of the product of marginals.
///
/// Returns the `L × (Dx + Dt)` matrix of concatenated pairs.
pub fn shuffle_marginal(x: &FeatureSequence, t: &FeatureSequence, rng: &mut impl Rng) -> Result<DenseMatrix> {
    check_paired(x, t)?;
    let perm = marginal_permutation(x.len(), rng)?;
    DenseMatrix::hstack(x.values(), &t.values().gather_rows(&perm))
}

pub(crate) fn check_paired(x: &FeatureSequence, t: &FeatureSequence) -> Result<()> {
    if x.len() != t.len() {
        return Err(Error::dimension("paired feature sequences (frames)", x.len(), t.len()));
    }
    Ok(())
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = v.iter().map(|s| (s - max).exp()).sum();
    max + (s / v.len() as f64).ln()
}

/// Donsker–Varadhan lower bound `mean(joint) − ln mean(exp(marginal))`,
/// evaluated with a max-shifted log-sum-exp.
pub fn dv_objective(joint_scores: &[f64], marginal_scores: &[f64]) -> Result<f64> {
    if joint_scores.is_empty() || marginal_scores.is_empty() {
        return Err(Error::Usage("dv_objective needs non-empty score vectors".into()));
    }
    let mean_joint = joint_scores.iter().sum::<f64>() / joint_scores.len() as f64;
    Ok(mean_joint - log_mean_exp(marginal_scores))
}

/// Output of [`mine_gradient`].
#[derive(Debug, Clone)]
pub struct MineGradient {
    /// Ascent direction for the bound, one tensor per network parameter.
    pub grads: MlpParams,
    /// Moving average of `mean(exp(ψ))` over marginal batches, after this batch.
    pub ema: f64,
    /// Bound evaluated on this batch with the clamped scores.
    pub objective: f64,
    pub clamp_events: usize,
}

/// Bias-corrected batch gradient of the bound.
///
/// The joint term contributes `E_B[∇ψ]`; the marginal term contributes
/// `−E_B[∇ψ·e^ψ] / ema`, where `ema` is the moving average of the batch
/// means of `e^ψ`, updated as `decay·ema + (1−decay)·batch_mean` before use.
/// `decay = 0` reproduces the plain batch estimator. Passing `None` as the
/// previous average seeds it with the current batch mean.
pub fn mine_gradient(
    joint_batch: &DenseMatrix,
    marginal_batch: &DenseMatrix,
    net: &MlpParams,
    ema_denominator: Option<f64>,
    ema_decay: f64,
) -> Result<MineGradient> {
    if let Some(e) = ema_denominator {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Usage(format!("ema denominator must be positive, got {e}")));
        }
    }
    if joint_batch.rows() == 0 || marginal_batch.rows() == 0 {
        return Err(Error::Usage("mine_gradient needs non-empty batches".into()));
    }
    if joint_batch.cols() != marginal_batch.cols() {
        return Err(Error::dimension(
            "mine_gradient batch widths",
            joint_batch.cols(),
            marginal_batch.cols(),
        ));
    }
    let nj = joint_batch.rows();
    let nm = marginal_batch.rows();
    let mut stacked = joint_batch.clone();
    let mut data = stacked.data().to_vec();
    data.extend_from_slice(marginal_batch.data());
    stacked = DenseMatrix::from_vec(nj + nm, joint_batch.cols(), data)?;

    let cache = net.forward_cached(&stacked)?;
    let mut clamp_events = 0;
    let mut clamped = Vec::with_capacity(nj + nm);
    let scores: Vec<f64> = cache
        .scores()
        .iter()
        .map(|&s| {
            let c = s.clamp(-SCORE_CLAMP, SCORE_CLAMP);
            let hit = c != s;
            clamp_events += hit as usize;
            clamped.push(hit);
            c
        })
        .collect();
    let (joint, marginal) = scores.split_at(nj);
    let objective = dv_objective(joint, marginal)?;

    let exp_m: Vec<f64> = marginal.iter().map(|s| s.exp()).collect();
    let batch_mean = exp_m.iter().sum::<f64>() / nm as f64;
    let ema = match ema_denominator {
        Some(prev) => ema_decay * prev + (1.0 - ema_decay) * batch_mean,
        None => batch_mean,
    };
    if !ema.is_finite() || ema <= 0.0 {
        return Err(Error::Numeric {
            context: "mine_gradient".into(),
            detail: format!("marginal exp term {ema} after clamping ({clamp_events} clamp events)"),
            history: vec![objective],
        });
    }

    let mut upstream = Vec::with_capacity(nj + nm);
    upstream.extend(clamped[..nj].iter().map(|&c| if c { 0.0 } else { 1.0 / nj as f64 }));
    upstream.extend(
        exp_m
            .iter()
            .zip(&clamped[nj..])
            .map(|(e, &c)| if c { 0.0 } else { -e / (nm as f64 * ema) }),
    );
    let grads = net.backward(&cache, &upstream)?;
    Ok(MineGradient {
        grads,
        ema,
        objective,
        clamp_events,
    })
}

/// Negates every tensor, turning an ascent direction into a descent one.
pub(crate) fn negate(p: &mut MlpParams) {
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v = -*v);
    }
}
