use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendLabel {
    ReconstructionShaped,
    MonotoneDecreasing,
    Other,
}

impl TrendLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrendLabel::ReconstructionShaped => "reconstruction_shaped",
            TrendLabel::MonotoneDecreasing => "monotone_decreasing",
            TrendLabel::Other => "other",
        }
    }
}

/// Centered 3-point moving average; the two endpoints average over the two
/// points they have.
pub fn smooth3(curve: &[f64]) -> Vec<f64> {
    let n = curve.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            curve[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Labels the shape of a log-MI curve after 3-point smoothing.
///
/// `reconstruction_shaped` (checked first): the global minimum is interior
/// and both ends lie more than `noise_band` above it.
/// `monotone_decreasing`: no step rises by more than `noise_band` and the
/// curve drops by more than `noise_band` from first to last point.
/// Everything else, including curves shorter than 3 points, is `other`.
pub fn classify_trend(log_curve: &[f64], noise_band: f64) -> TrendLabel {
    if log_curve.len() < 3 || log_curve.iter().any(|v| !v.is_finite()) {
        return TrendLabel::Other;
    }
    let s = smooth3(log_curve);
    let (argmin, min) = s
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    let (first, last) = (s[0], s[s.len() - 1]);
    if argmin != 0 && argmin != s.len() - 1 && first - min > noise_band && last - min > noise_band {
        return TrendLabel::ReconstructionShaped;
    }
    if s.windows(2).all(|w| w[1] - w[0] <= noise_band) && first - last > noise_band {
        return TrendLabel::MonotoneDecreasing;
    }
    TrendLabel::Other
}
