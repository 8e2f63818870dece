use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sslhop::config::{load_config, resolve_pipeline, Ablation, Overrides, RunConfig};
use sslhop::dataset::load_samples;
use sslhop::error::{Error, Result};
use sslhop::manifest::load_manifest;
use sslhop::model_file::{load_model, save_model};
use sslhop::report;
use sslhop::synthetic::{gen_synthetic, SyntheticSpec};
use sslhop_core::classifier::{cross_validate, Prediction};
use sslhop_core::pipeline::{fit_pipeline, PipelineConfig};

/// Successive-subspace-learning classifier for 3D deformation fields.
#[derive(Parser)]
#[command(name = "sslhop", version)]
struct Cli {
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (field files + manifest.json).
    GenSynthetic {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model on every subject in a manifest.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Predict the subjects of a manifest with a fitted model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified k-fold cross-validation, optionally with an ablation.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_enum, default_value_t = AblationArg::None)]
        ablation: AblationArg,
    },
    /// Dump energy curves, channel entropies, the shape ledger and parameter
    /// counts of a fitted model.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Drop the last depth slice before the fifth layer's pooling.
    #[arg(long)]
    truncate_layer5: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    NoCefs,
    NoIc,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::None => Ablation::None,
            AblationArg::NoCefs => Ablation::NoCefs,
            AblationArg::NoIc => Ablation::NoIc,
        }
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    timestamp: String,
    crate_version: &'static str,
    threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    manifest: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a Path>,
    #[serde(skip_serializing_if = "Option::is_none")]
    folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ablation: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pipeline: Option<&'a PipelineConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    synthetic: Option<&'a SyntheticSpec>,
}

impl<'a> RunRecord<'a> {
    fn new(command: &'a str) -> Self {
        let timestamp = time::OffsetDateTime::now_utc()
            .format(&time::format_description::well_known::Rfc3339)
            .unwrap_or_default();
        Self {
            command,
            timestamp,
            crate_version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
            manifest: None,
            model: None,
            folds: None,
            ablation: None,
            pipeline: None,
            synthetic: None,
        }
    }

    fn write(&self, out: &Path) -> Result<()> {
        let path = out.join("run.json");
        fs::write(&path, report::to_json(self)).map_err(|e| Error::Io { path, source: e })
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::Io {
        path: p.to_path_buf(),
        source: e,
    })
}

fn run_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn pipeline_config(common: &Common, ablation: Ablation) -> Result<PipelineConfig> {
    let o = Overrides {
        seed: common.seed,
        truncate_layer5: common.truncate_layer5,
        ablation,
    };
    resolve_pipeline(&run_config(common)?, &o)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic { common } => {
            let mut spec = run_config(&common)?.synthetic.unwrap_or_else(|| SyntheticSpec::standard(42));
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            create_dir(&common.out)?;
            let m = gen_synthetic(&spec, &common.out)?;
            log::info!("wrote {} subjects to {}", m.records.len(), common.out.display());
            RunRecord {
                synthetic: Some(&spec),
                ..RunRecord::new("gen-synthetic")
            }
            .write(&common.out)
        }
        Command::Fit { common, manifest } => {
            let cfg = pipeline_config(&common, Ablation::None)?;
            let m = load_manifest(&manifest)?;
            let samples = load_samples(&m, &cfg)?;
            create_dir(&common.out)?;
            let model = fit_pipeline(&samples, &cfg)?;
            save_model(&model, &common.out.join("model.sslhop"))?;
            RunRecord {
                manifest: Some(&manifest),
                pipeline: Some(&cfg),
                ..RunRecord::new("fit")
            }
            .write(&common.out)
        }
        Command::Predict { model, manifest, out } => {
            let fitted = load_model(&model)?;
            let m = load_manifest(&manifest)?;
            let samples = load_samples(&m, &fitted.config)?;
            let (pred, scores) = fitted.predict(&samples)?;
            let predictions: Vec<Prediction> = samples
                .iter()
                .enumerate()
                .map(|(i, s)| Prediction {
                    subject_id: s.subject_id.clone(),
                    label: s.label,
                    predicted: pred[i],
                    fold: 0,
                    scores: scores.row(i).to_vec(),
                })
                .collect();
            create_dir(&out)?;
            report::write_predictions(&out, &predictions)?;
            RunRecord {
                manifest: Some(&manifest),
                model: Some(&model),
                pipeline: Some(&fitted.config),
                ..RunRecord::new("predict")
            }
            .write(&out)
        }
        Command::Evaluate {
            common,
            manifest,
            folds,
            ablation,
        } => {
            let ablation = Ablation::from(ablation);
            let cfg = pipeline_config(&common, ablation)?;
            let m = load_manifest(&manifest)?;
            let samples = load_samples(&m, &cfg)?;
            create_dir(&common.out)?;
            let cv = cross_validate(&samples, folds, &cfg, cfg.seed)?;
            log::info!(
                "pooled accuracy {:.4}, macro AUC {:.4}",
                cv.report.pooled_accuracy,
                cv.report.macro_auc
            );
            report::write_evaluation(&common.out, &cv, &m.classes, ablation.as_str())?;
            RunRecord {
                manifest: Some(&manifest),
                folds: Some(folds),
                ablation: Some(ablation.as_str()),
                pipeline: Some(&cfg),
                ..RunRecord::new("evaluate")
            }
            .write(&common.out)
        }
        Command::Inspect { model, out } => {
            let fitted = load_model(&model)?;
            create_dir(&out)?;
            report::write_inspection(&out, &fitted)?;
            print!("{}", report::ledger_table(&fitted));
            RunRecord {
                model: Some(&model),
                pipeline: Some(&fitted.config),
                ..RunRecord::new("inspect")
            }
            .write(&out)
        }
    }
}

#[derive(Serialize)]
struct ErrorReport {
    error: &'static str,
    message: String,
    exit_code: i32,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSLHOP_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let r = ErrorReport {
                error: e.kind(),
                message: e.to_string(),
                exit_code: code,
            };
            eprintln!("{}", serde_json::to_string(&r).expect("error serializes"));
            ExitCode::from(code as u8)
        }
    }
}
