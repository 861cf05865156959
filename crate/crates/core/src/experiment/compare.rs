use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::svg::{line_plot, Series};
use crate::error::{Error, Result};
use crate::mine::Side;
use crate::probe::{LayerProbeReport, TrendLabel};

pub const TABLE_FILE: &str = "comparison.txt";
pub const OVERLAY_FILE: &str = "overlay.svg";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub source: String,
    pub config_hash: String,
    pub trend_label: TrendLabel,
    pub log_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub taps: Vec<usize>,
    pub rows: Vec<ComparisonRow>,
    /// Set when the input-side trend labels are not all equal.
    pub labels_differ: bool,
    pub table: String,
    pub overlay_svg: String,
}

impl Comparison {
    /// Builds the comparison of the input-side curves of `reports`, named by
    /// `sources`.
    pub fn build(sources: &[String], reports: &[LayerProbeReport]) -> Result<Self> {
        if reports.len() < 2 {
            return Err(Error::Usage(format!("compare needs at least 2 reports, got {}", reports.len())));
        }
        let first = &reports[0];
        for (src, r) in sources.iter().zip(reports).skip(1) {
            if r.taps.len() != first.taps.len() {
                return Err(Error::Usage(format!(
                    "{src} has {} layers, {} has {}",
                    r.taps.len(),
                    sources[0],
                    first.taps.len()
                )));
            }
            if r.layer_convention != first.layer_convention {
                return Err(Error::Usage(format!("{src} uses a different layer convention than {}", sources[0])));
            }
        }
        let mut rows = Vec::with_capacity(reports.len());
        for (src, r) in sources.iter().zip(reports) {
            let side = r
                .side(Side::InputSide)
                .ok_or_else(|| Error::Usage(format!("{src} has no input-side curve")))?;
            rows.push(ComparisonRow {
                source: src.clone(),
                config_hash: r.config_hash.clone(),
                trend_label: side.trend_label,
                log_values: side.curve.log_values.clone(),
            });
        }
        let labels_differ = rows.iter().any(|r| r.trend_label != rows[0].trend_label);

        let mut table = String::from("report\ttrend_label\tconfig_hash\tlog_mi by layer\n");
        for r in &rows {
            let values: Vec<String> = r.log_values.iter().map(|v| format!("{v:.4}")).collect();
            writeln!(table, "{}\t{}\t{}\t{}", r.source, r.trend_label.as_str(), r.config_hash, values.join(" ")).unwrap();
        }
        writeln!(table, "labels differ: {}", if labels_differ { "yes" } else { "no" }).unwrap();

        let series: Vec<Series> = rows
            .iter()
            .zip(reports)
            .map(|(row, r)| Series {
                label: format!("{} ({})", row.source, row.trend_label.as_str()),
                layers: &r.taps,
                values: &row.log_values,
            })
            .collect();
        let hashes: Vec<&str> = rows.iter().map(|r| r.config_hash.as_str()).collect();
        let overlay_svg = line_plot(
            "input-side log MI",
            &format!("config_hash {}; {}", hashes.join(" "), first.layer_convention),
            "log mean MI (nats)",
            &series,
        );
        Ok(Self {
            taps: first.taps.clone(),
            rows,
            labels_differ,
            table,
            overlay_svg,
        })
    }
}

/// Reads the reports at `paths`, compares them and writes the table and
/// overlay plot into `out_dir`.
pub fn compare_runs(paths: &[PathBuf], out_dir: &Path) -> Result<Comparison> {
    let reports = paths.iter().map(|p| LayerProbeReport::read(p)).collect::<Result<Vec<_>>>()?;
    let sources: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let cmp = Comparison::build(&sources, &reports)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let table = out_dir.join(TABLE_FILE);
    std::fs::write(&table, &cmp.table).map_err(|e| Error::io(&table, e))?;
    let svg = out_dir.join(OVERLAY_FILE);
    std::fs::write(&svg, &cmp.overlay_svg).map_err(|e| Error::io(&svg, e))?;
    Ok(cmp)
}
