//! End-to-end runs: data → split → train → ε sweep → report files.

mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{AttackSettings, DataSource, ExperimentConfig, ReportFormat};
pub use report::{emit_report, format_number, DetailRow, ExperimentReport, Timings};

use crate::attack::{epsilon_sweep, fgsm, SweepRecord};
use crate::data::{load_manifest, save_pgm, split, synth_dataset, Dataset};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::nn::{checkpoint, default_layers, train, EpochStats, Model};

pub const OUT_DIR_ENV: &str = "ADVBENCH_OUT";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_JSON: &str = "train.json";

/// Output directory precedence: explicit flag, config file, environment
/// variable, then `./advbench-out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("advbench-out"))
}

fn data_error(e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Pgm { .. } | Error::Data(_) => e,
        other => Error::Data(other.to_string()),
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic { n, size, seed } => {
            synth_dataset(*n, *size, *seed).map_err(data_error)
        }
        DataSource::Manifest { path, size } => load_manifest(path, *size).map_err(|e| match e {
            Error::Io { path, source } => Error::Data(format!("{}: {source}", path.display())),
            other => data_error(other),
        }),
    }
}

/// Loads the configured data and splits it into `(train, test)`.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let ds = load_dataset(cfg)?;
    split(&ds, cfg.train_fraction, cfg.split_seed).map_err(data_error)
}

pub fn clean_accuracy(model: &Model, test: &Dataset) -> Result<f64> {
    let preds = test
        .items()
        .iter()
        .map(|it| model.predict(&it.pixels))
        .collect::<Result<Vec<_>>>()?;
    accuracy(&preds, &test.labels())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub test_accuracy: f64,
}

/// Builds the configured architecture, initialises it from the training
/// seed and trains it.
pub fn train_stage(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TrainOutcome> {
    let size = cfg.image_size();
    let input = [1, size, size];
    let layers = default_layers(input, &cfg.model).map_err(|e| Error::Config(e.to_string()))?;
    let model = Model::init(input, layers, cfg.train.seed)?;
    let (model, history) = train(model, train_set, &cfg.train)?;
    let test_accuracy = clean_accuracy(&model, test_set)?;
    Ok(TrainOutcome {
        model,
        history,
        test_accuracy,
    })
}

pub fn attack_stage(
    cfg: &ExperimentConfig,
    model: &Model,
    test_set: &Dataset,
) -> Result<Vec<SweepRecord>> {
    epsilon_sweep(model, test_set, &cfg.attack.to_attack_config()?)
}

/// Writes `adversarial/eps_<ε>/<id>.pgm` for every test image and ε.
pub fn dump_adversarial(
    cfg: &ExperimentConfig,
    model: &Model,
    test_set: &Dataset,
    dir: &Path,
) -> Result<()> {
    for &eps in &cfg.attack.epsilons {
        let sub = dir
            .join("adversarial")
            .join(format!("eps_{}", format_number(eps)));
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for item in test_set.items() {
            let sample = fgsm(model, &item.pixels, item.label, eps, cfg.attack.clip)?;
            // Unclipped samples can leave [0, 1]; the PGM writer saturates.
            save_pgm(
                &sub.join(format!("{}.pgm", item.id)),
                &sample.perturbed,
                255,
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, serde::Serialize)]
struct TrainSummary<'a> {
    toolkit_version: &'a str,
    test_accuracy: f64,
    n_train: usize,
    n_test: usize,
    history: &'a [EpochStats],
}

/// Saves the checkpoint and a `train.json` summary into `dir`.
pub fn write_train_outputs(
    outcome: &TrainOutcome,
    n_train: usize,
    n_test: usize,
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    checkpoint::save(&outcome.model, &dir.join(MODEL_FILE))?;
    let summary = TrainSummary {
        toolkit_version: env!("CARGO_PKG_VERSION"),
        test_accuracy: outcome.test_accuracy,
        n_train,
        n_test,
        history: &outcome.history,
    };
    let path = dir.join(TRAIN_JSON);
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n";
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Runs every stage and returns the report. Nothing is written to disk;
/// see [`emit_report`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Model)> {
    let t0 = Instant::now();
    let (train_set, test_set) = prepare_data(cfg)?;
    let t1 = Instant::now();
    let outcome = train_stage(cfg, &train_set, &test_set)?;
    let t2 = Instant::now();
    let sweep = attack_stage(cfg, &outcome.model, &test_set)?;
    let t3 = Instant::now();
    let report = ExperimentReport {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        n_train: train_set.len(),
        n_test: test_set.len(),
        clean_accuracy: outcome.test_accuracy,
        history: outcome.history,
        sweep,
        timings: Timings {
            data_seconds: (t1 - t0).as_secs_f64(),
            train_seconds: (t2 - t1).as_secs_f64(),
            attack_seconds: (t3 - t2).as_secs_f64(),
        },
    };
    Ok((report, outcome.model))
}

/// [`run_experiment`] followed by writing the checkpoint and every requested
/// report file into `dir`.
pub fn run_and_emit(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentReport> {
    let (report, model) = run_experiment(cfg)?;
    let outcome = TrainOutcome {
        model,
        history: report.history.clone(),
        test_accuracy: report.clean_accuracy,
    };
    write_train_outputs(&outcome, report.n_train, report.n_test, dir)?;
    emit_report(&report, dir)?;
    if cfg.wants(ReportFormat::Pgm) {
        let (_, test_set) = prepare_data(cfg)?;
        dump_adversarial(cfg, &outcome.model, &test_set, dir)?;
    }
    Ok(report)
}
