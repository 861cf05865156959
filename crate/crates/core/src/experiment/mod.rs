//! End-to-end experiment runs and report comparison.
//!
//! An [`ExperimentSpec`] fixes every knob of a run. All randomness is derived
//! from its master seed with [`sub_seed`] under the roles listed in
//! [`SEED_ROLES`]; the `seed` fields of the nested training and probe
//! configurations are ignored.

mod compare;
mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mine::{MineConfig, Side};
use crate::models::{
    config_hash, gen_synthetic_dataset, save_model, train_task, DataSpec, Model, ModelMeta, ModelSpec,
    SyntheticDataset, TaskKind, TrainConfig,
};
use crate::probe::{probe_layers, LayerProbeReport, ProbeConfig};
use crate::seeds::sub_seed;

pub use compare::{compare_runs, Comparison, ComparisonRow, OVERLAY_FILE, TABLE_FILE};
pub use svg::{line_plot, Series};

pub const SEED_ROLES: [&str; 4] = ["data", "model/init", "train", "probe"];

pub const MODEL_FILE: &str = "model.bin";
pub const REPORT_FILE: &str = "report.json";
pub const CSV_FILE: &str = "report.csv";
pub const SVG_FILE: &str = "curve.svg";
pub const FAILURE_MARKER: &str = "FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub task: TaskKind,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    /// `data.task` is replaced by `task`.
    pub data: DataSpec,
    /// Not part of the config hash, so moving a run does not change its
    /// artifacts.
    pub out_dir: PathBuf,
    pub master_seed: u64,
}

/// Probe settings sized for a laptop: 12 samples, and a 64-wide statistics
/// network trained for 600 steps on 128-frame batches.
pub fn desk_probe_config() -> ProbeConfig {
    ProbeConfig {
        n_samples: 12,
        mine: MineConfig {
            batch_size: 128,
            train_steps: 600,
            eval_batches: 8,
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            ..MineConfig::default()
        },
        ..ProbeConfig::default()
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            task: TaskKind::Reconstruction,
            model: ModelSpec::default(),
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            probe: desk_probe_config(),
            data: DataSpec::default(),
            out_dir: PathBuf::from("runs/experiment"),
            master_seed: 0,
        }
    }
}

fn filesystem_safe(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !filesystem_safe(&self.name) {
            return Err(Error::Config(format!(
                "experiment name {:?} must be nonempty and use only ASCII letters, digits, '-', '_' and '.'",
                self.name
            )));
        }
        if self.model.head.task() != self.task {
            return Err(Error::Config(format!(
                "model head {} does not fit task {:?}",
                self.model.head.as_str(),
                self.task
            )));
        }
        let data = self.data_spec();
        data.validate()?;
        if self.model.input_dim != data.feature_dim {
            return Err(Error::Config(format!(
                "model.input_dim {} differs from data.feature_dim {}",
                self.model.input_dim, data.feature_dim
            )));
        }
        if self.task == TaskKind::Classification && self.model.class_count != data.class_count {
            return Err(Error::Config(format!(
                "model.class_count {} differs from data.class_count {}",
                self.model.class_count, data.class_count
            )));
        }
        if self.probe.n_samples > data.n_samples {
            return Err(Error::Config(format!(
                "probe.n_samples {} exceeds data.n_samples {}",
                self.probe.n_samples, data.n_samples
            )));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.probe.validate()
    }

    pub fn data_spec(&self) -> DataSpec {
        DataSpec {
            task: self.task,
            ..self.data.clone()
        }
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        SEED_ROLES
            .iter()
            .map(|role| (role.to_string(), sub_seed(self.master_seed, role)))
            .collect()
    }

    pub fn seed(&self, role: &str) -> u64 {
        sub_seed(self.master_seed, role)
    }

    /// SHA-256 of the spec without `out_dir`.
    pub fn config_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("out_dir");
        }
        config_hash(&v)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed("train"),
            ..self.train.clone()
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            seed: self.seed("probe"),
            ..self.probe.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Applies `path=value` overrides such as `train.epochs=5`. Values are
    /// parsed as JSON and fall back to plain strings. Unknown paths are
    /// configuration errors.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for item in overrides {
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not of the form path=value")))?;
            set_dotted(&mut v, path, raw)?;
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("after overrides: {e}")))
    }
}

fn set_dotted(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let mut cur = root;
    for key in path.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("unknown config path {path:?}")))?;
    }
    *cur = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Paths of the four files a successful run leaves in its output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub model: PathBuf,
    pub report_json: PathBuf,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            model: dir.join(MODEL_FILE),
            report_json: dir.join(REPORT_FILE),
            csv: dir.join(CSV_FILE),
            svg: dir.join(SVG_FILE),
        }
    }
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub artifacts: RunArtifacts,
    pub model: Model,
    pub loss_history: Vec<f64>,
    pub report: LayerProbeReport,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Generates data, trains, probes and writes the artifacts of `spec`.
///
/// On failure the files written so far stay in place next to a
/// [`FAILURE_MARKER`] file holding the error message.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let dir = &spec.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    let result = run_stages(spec);
    if let Err(e) = &result {
        write(&marker, &format!("{e}\n"))?;
    }
    result
}

fn run_stages(spec: &ExperimentSpec) -> Result<RunOutcome> {
    let hash = spec.config_hash()?;
    let artifacts = RunArtifacts::in_dir(&spec.out_dir);
    log::info!("{}: config hash {hash}", spec.name);

    let data: SyntheticDataset = gen_synthetic_dataset(&spec.data_spec(), spec.seed("data"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed("model/init"));
    let mut model = Model::init(&spec.model, &mut rng)?;
    let outcome = train_task(&mut model, &data, &spec.train_config())?;
    log::info!(
        "{}: trained {} steps, final loss {:?}",
        spec.name,
        outcome.steps,
        outcome.loss_history.last()
    );
    let meta = ModelMeta {
        seeds: spec.seeds(),
        config_hash: hash.clone(),
    };
    save_model(&artifacts.model, &model, &meta)?;

    let report = probe_layers(&model, &data, &spec.probe_config(), &hash)?;
    write_report_files(&report, &spec.name, &artifacts)?;
    Ok(RunOutcome {
        artifacts,
        model,
        loss_history: outcome.loss_history,
        report,
    })
}

/// Writes the JSON report, its CSV table and its SVG plot.
pub fn write_report_files(report: &LayerProbeReport, title: &str, artifacts: &RunArtifacts) -> Result<()> {
    write(&artifacts.report_json, &report.to_json()?)?;
    write(&artifacts.csv, &report.to_csv())?;
    write(&artifacts.svg, &report_svg(report, title))
}

/// One polyline per probed side.
pub fn report_svg(report: &LayerProbeReport, title: &str) -> String {
    let series: Vec<Series> = report
        .sides
        .iter()
        .map(|s| Series {
            label: format!("{} ({})", side_label(s.side), s.trend_label.as_str()),
            layers: &report.taps,
            values: &s.curve.log_values,
        })
        .collect();
    line_plot(
        title,
        &format!("config_hash {}; {}", report.config_hash, report.layer_convention),
        "log mean MI (nats)",
        &series,
    )
}

fn side_label(side: Side) -> &'static str {
    match side {
        Side::InputSide => "I(X; T)",
        Side::TargetSide => "I(T; Y)",
    }
}
