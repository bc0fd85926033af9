use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use advbench::data::{export_dataset, load_pgm, synth_dataset};
use advbench::experiment::report::{emit_sweep, parse_sweep_csv, write_charts};
use advbench::experiment::{
    attack_stage, clean_accuracy, dump_adversarial, format_number, prepare_data, resolve_out_dir,
    run_and_emit, train_stage, write_train_outputs, DataSource, ExperimentConfig, ReportFormat,
    MODEL_FILE,
};
use advbench::metrics::{ssim, DEFAULT_WINDOW};
use advbench::nn::checkpoint;
use advbench::{Error, Result};

/// FGSM robustness benchmark for small grayscale CNN classifiers.
///
/// Exit codes: 0 success, 2 usage error, 3 configuration error, 4 data or
/// checkpoint error, 5 I/O error, 6 runtime error.
#[derive(Parser, Debug)]
#[command(name = "advbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (TOML). Built-in defaults are used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Replaces the config's seed and every per-stage seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory. Falls back to the config's `output.dir`, then
    /// $ADVBENCH_OUT, then ./advbench-out.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset as PGM files plus manifest.csv.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Number of images (overrides the config).
        #[arg(long)]
        n: Option<usize>,
        /// Image side length in pixels (overrides the config).
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train the classifier; writes model.ckpt and train.json.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the epsilon sweep against a saved checkpoint.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to attack (default: <out>/model.ckpt).
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Train and sweep in one run, writing every report file.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Redraw the accuracy and SSIM charts from an existing sweep.csv.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory containing sweep.csv (default: the output directory).
        #[arg(long, value_name = "DIR")]
        input: Option<PathBuf>,
    },
    /// Print the mean SSIM of two PGM images.
    Ssim {
        a: PathBuf,
        b: PathBuf,
        /// Sliding window side, capped at the image size.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        /// Dynamic range of the pixel values.
        #[arg(long, default_value_t = 1.0)]
        range: f64,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path, common.seed),
        None => ExperimentConfig::from_toml("", Path::new("."), common.seed),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, n, size } => {
            let cfg = load_config(&common)?;
            let (cfg_n, cfg_size, seed) = match cfg.data {
                DataSource::Synthetic { n, size, seed } => (n, size, seed),
                DataSource::Manifest { size, .. } => (100, size, cfg.seed),
            };
            let ds = synth_dataset(n.unwrap_or(cfg_n), size.unwrap_or(cfg_size), seed)
                .map_err(|e| Error::Data(e.to_string()))?;
            let out = resolve_out_dir(common.out.as_deref(), &cfg);
            let manifest = export_dataset(&ds, &out)?;
            println!("wrote {} images to {}", ds.len(), manifest.display());
        }
        Command::Train { common } => {
            let cfg = load_config(&common)?;
            let out = resolve_out_dir(common.out.as_deref(), &cfg);
            let (train_set, test_set) = prepare_data(&cfg)?;
            let outcome = train_stage(&cfg, &train_set, &test_set)?;
            write_train_outputs(&outcome, train_set.len(), test_set.len(), &out)?;
            if let Some(last) = outcome.history.last() {
                println!("final epoch loss {}", format_number(last.mean_loss));
            }
            println!("test accuracy {}", format_number(outcome.test_accuracy));
        }
        Command::Attack { common, model } => {
            let cfg = load_config(&common)?;
            let out = resolve_out_dir(common.out.as_deref(), &cfg);
            let model_path = model.unwrap_or_else(|| out.join(MODEL_FILE));
            let model = checkpoint::load(&model_path)?;
            let (_, test_set) = prepare_data(&cfg)?;
            println!(
                "clean accuracy {}",
                format_number(clean_accuracy(&model, &test_set)?)
            );
            let sweep = attack_stage(&cfg, &model, &test_set)?;
            emit_sweep(&sweep, &out, &cfg.formats)?;
            if cfg.wants(ReportFormat::Pgm) {
                dump_adversarial(&cfg, &model, &test_set, &out)?;
            }
            print_sweep(&sweep);
        }
        Command::Sweep { common } => {
            let cfg = load_config(&common)?;
            let out = resolve_out_dir(common.out.as_deref(), &cfg);
            let report = run_and_emit(&cfg, &out)?;
            println!("test accuracy {}", format_number(report.clean_accuracy));
            print_sweep(&report.sweep);
            println!("reports in {}", out.display());
        }
        Command::Report { common, input } => {
            let cfg = load_config(&common)?;
            let out = resolve_out_dir(common.out.as_deref(), &cfg);
            let input = input.unwrap_or_else(|| out.clone());
            let path = input.join("sweep.csv");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let rows: Vec<_> = parse_sweep_csv(&text)?
                .into_iter()
                .map(|(e, a, s, _)| (e, a, s))
                .collect();
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for p in write_charts(&out, &rows)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Ssim {
            a,
            b,
            window,
            range,
        } => {
            let (x, y) = (load_pgm(&a)?, load_pgm(&b)?);
            let side = x.shape()[1].min(x.shape()[2]);
            let report = ssim(&x, &y, window.min(side), range)?;
            println!("{:.6}", report.mean_ssim);
        }
    }
    Ok(())
}

fn print_sweep(sweep: &[advbench::attack::SweepRecord]) {
    println!("{:>10} {:>10} {:>10}", "epsilon", "accuracy", "mean_ssim");
    for r in sweep {
        println!(
            "{:>10} {:>10} {:>10}",
            format_number(r.epsilon),
            format_number(r.accuracy),
            format_number(r.mean_ssim)
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
