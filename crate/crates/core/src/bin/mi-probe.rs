use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use mi_probe::experiment::{
    compare_runs, run_experiment, write_report_files, ExperimentSpec, RunArtifacts, MODEL_FILE, OVERLAY_FILE, TABLE_FILE,
};
use mi_probe::models::{gen_synthetic_dataset, load_dataset, load_model, save_dataset, save_model, train_task, Model, ModelMeta};
use mi_probe::probe::{probe_layers, LayerProbeReport};
use mi_probe::{Error, Result};

/// Layer-wise mutual information probing of toy selective state-space
/// encoders.
#[derive(Parser)]
#[command(name = "mi-probe", version)]
struct Cli {
    /// Worker threads for probing; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment spec as JSON; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, replacing the one in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Field override by dotted path, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentSpec> {
        let base = match &self.config {
            Some(p) => ExperimentSpec::read(p)?,
            None => ExperimentSpec::default(),
        };
        let mut spec = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            spec.master_seed = s;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset of an experiment.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a stored dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probe a stored model and write report JSON, CSV and SVG.
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render CSV and SVG from a report JSON and print its labels.
    Report {
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the input-side curves of two or more reports.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, train, probe and report in one go.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory, replacing `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_labels(report: &LayerProbeReport) {
    for s in &report.sides {
        println!("{}: {}", s.side.as_str(), s.trend_label.as_str());
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::GenData { cfg, out } => {
            let spec = cfg.load()?;
            let data = gen_synthetic_dataset(&spec.data_spec(), spec.seed("data"))?;
            save_dataset(&out, &data)?;
            println!("wrote {} samples to {}", data.len(), out.display());
        }
        Command::Train { cfg, data, out } => {
            let spec = cfg.load()?;
            let data = load_dataset(&data)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed("model/init"));
            let mut model = Model::init(&spec.model, &mut rng)?;
            let outcome = train_task(&mut model, &data, &spec.train_config())?;
            let meta = ModelMeta {
                seeds: spec.seeds(),
                config_hash: spec.config_hash()?,
            };
            save_model(&out, &model, &meta)?;
            println!(
                "trained {} steps, final loss {}",
                outcome.steps,
                outcome.loss_history.last().map_or("n/a".into(), |l| format!("{l:.6}"))
            );
        }
        Command::Probe { cfg, model, data, out } => {
            let spec = cfg.load()?;
            let (model, meta) = load_model(&model)?;
            let data = load_dataset(&data)?;
            let report = probe_layers(&model, &data, &spec.probe_config(), &meta.config_hash)?;
            ensure_dir(&out)?;
            write_report_files(&report, &spec.name, &RunArtifacts::in_dir(&out))?;
            print_labels(&report);
        }
        Command::Report { report, out } => {
            let r = LayerProbeReport::read(&report)?;
            if !r.labels_consistent() {
                return Err(Error::Usage(format!("{}: stored trend labels do not match the curves", report.display())));
            }
            ensure_dir(&out)?;
            let title = report.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
            write_report_files(&r, &title, &RunArtifacts::in_dir(&out))?;
            print_labels(&r);
        }
        Command::Compare { reports, out } => {
            let cmp = compare_runs(&reports, &out)?;
            print!("{}", cmp.table);
            println!("wrote {} and {}", out.join(TABLE_FILE).display(), out.join(OVERLAY_FILE).display());
        }
        Command::Run { cfg, out } => {
            let mut spec = cfg.load()?;
            if let Some(dir) = out {
                spec.out_dir = dir;
            }
            let outcome = run_experiment(&spec)?;
            print_labels(&outcome.report);
            println!("artifacts in {} ({MODEL_FILE} and reports)", spec.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MI_PROBE_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
