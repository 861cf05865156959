use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::MIEstimate;

/// Floor applied before taking logarithms of layer means.
pub const LOG_FLOOR: f64 = 1e-6;

/// Per-layer sample means of MI estimates and their natural logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedCurve {
    pub per_layer_mean: Vec<f64>,
    pub n_samples: usize,
    /// Empty until [`log_transform`] fills it.
    pub log_values: Vec<f64>,
    /// Layers whose mean fell below [`LOG_FLOOR`] and were clamped.
    pub clamped: Vec<bool>,
}

/// Arithmetic mean per layer over equally sized sample groups.
pub fn average_mi(groups: &[Vec<MIEstimate>]) -> Result<AveragedCurve> {
    let values: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| g.iter().map(|e| e.value_nats).collect())
        .collect();
    average_values(&values)
}

pub(crate) fn average_values(groups: &[Vec<f64>]) -> Result<AveragedCurve> {
    let n = groups.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Usage("average_mi needs at least one sample per layer".into()));
    }
    if let Some((layer, g)) = groups.iter().enumerate().find(|(_, g)| g.len() != n) {
        return Err(Error::Usage(format!(
            "ragged layer groups: layer {layer} has {} samples, expected {n}",
            g.len()
        )));
    }
    Ok(AveragedCurve {
        per_layer_mean: groups
            .iter()
            .map(|g| g.iter().sum::<f64>() / n as f64)
            .collect(),
        n_samples: n,
        log_values: Vec::new(),
        clamped: Vec::new(),
    })
}

/// Fills `log_values[i] = ln(max(mean_i, 1e-6))` and flags clamped layers.
pub fn log_transform(mut curve: AveragedCurve) -> AveragedCurve {
    curve.clamped = curve.per_layer_mean.iter().map(|&m| !(m >= LOG_FLOOR)).collect();
    curve.log_values = curve
        .per_layer_mean
        .iter()
        .map(|&m| if m >= LOG_FLOOR { m.ln() } else { LOG_FLOOR.ln() })
        .collect();
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mine::Side;

    fn est(v: f64) -> MIEstimate {
        MIEstimate {
            value_nats: v,
            layer_index: 0,
            side: Side::InputSide,
            sample_id: String::new(),
            final_loss_curve: vec![],
            clamp_events: 0,
        }
    }

    #[test]
    fn single_sample_is_identity() {
        let c = average_mi(&[vec![est(0.25)], vec![est(1.5)]]).unwrap();
        assert_eq!(c.per_layer_mean, vec![0.25, 1.5]);
        assert_eq!(c.n_samples, 1);
    }

    #[test]
    fn three_samples_average() {
        let c = average_mi(&[vec![est(1.0), est(2.0), est(3.0)]]).unwrap();
        assert_eq!(c.per_layer_mean, vec![2.0]);
    }

    #[test]
    fn matches_streaming_mean() {
        let groups: Vec<Vec<f64>> = (0..4)
            .map(|l| (0..37).map(|s| ((l * 31 + s * 17) % 23) as f64 / 7.0 - 1.0).collect())
            .collect();
        let c = average_values(&groups).unwrap();
        for (g, m) in groups.iter().zip(&c.per_layer_mean) {
            let mut mean = 0.0;
            for (k, v) in g.iter().enumerate() {
                mean += (v - mean) / (k + 1) as f64;
            }
            assert!((mean - m).abs() < 1e-12);
        }
    }

    #[test]
    fn ragged_groups_are_rejected() {
        assert!(average_mi(&[vec![est(1.0)], vec![est(1.0), est(2.0)]]).is_err());
        assert!(average_mi(&[]).is_err());
    }

    #[test]
    fn log_transform_examples() {
        let c = log_transform(average_values(&[vec![1.0], vec![std::f64::consts::E], vec![-0.001]]).unwrap());
        assert_eq!(c.log_values[0], 0.0);
        assert!((c.log_values[1] - 1.0).abs() < 1e-15);
        assert!((c.log_values[2] - (-13.815510557964274)).abs() < 1e-12);
        assert_eq!(c.clamped, vec![false, false, true]);
    }
}
