use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trend::{classify_trend, TrendLabel};
use crate::error::{Error, Result};
use crate::mine::{AveragedCurve, MIEstimate, Side};
use crate::models::HeadKind;

pub const LAYER_CONVENTION: &str =
    "per-block taps: 0 = input projection, i = output of encoder block i, then one tap per decoder block";

pub const CSV_HEADER: &str = "layer,side,mean_mi,log_mi,n_samples,flag,config_hash";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideReport {
    pub side: Side,
    /// Indexed like [`LayerProbeReport::taps`].
    pub curve: AveragedCurve,
    pub trend_label: TrendLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sample_id: String,
    pub layer_index: usize,
    pub side: Side,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProbeReport {
    pub config_hash: String,
    pub head: HeadKind,
    pub layer_convention: String,
    /// Base of `log_values`.
    pub log_base: String,
    /// Probed representation indices.
    pub taps: Vec<usize>,
    pub noise_band: f64,
    pub sides: Vec<SideReport>,
    pub estimates: Vec<MIEstimate>,
    pub failures: Vec<FailureRecord>,
}

impl LayerProbeReport {
    pub fn side(&self, side: Side) -> Option<&SideReport> {
        self.sides.iter().find(|s| s.side == side)
    }

    /// Re-derives every trend label from the stored log curves.
    pub fn labels_consistent(&self) -> bool {
        self.sides
            .iter()
            .all(|s| classify_trend(&s.curve.log_values, self.noise_band) == s.trend_label)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// One row per `(side, layer)`; `flag` is `clamped` when the log floor
    /// was applied and `ok` otherwise. Floats use Rust's shortest
    /// round-trip formatting, so parsing a row gives back the JSON values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for s in &self.sides {
            for (k, &layer) in self.taps.iter().enumerate() {
                let flag = if s.curve.clamped.get(k).copied().unwrap_or(false) {
                    "clamped"
                } else {
                    "ok"
                };
                writeln!(
                    out,
                    "{layer},{},{},{},{},{flag},{}",
                    s.side.as_str(),
                    s.curve.per_layer_mean[k],
                    s.curve.log_values[k],
                    s.curve.n_samples,
                    self.config_hash
                )
                .expect("writing to a String");
            }
        }
        out
    }
}
