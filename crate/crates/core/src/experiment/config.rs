//! Experiment configuration, read from a TOML document.
//!
//! ```toml
//! seed = 42
//!
//! [data]
//! source = "synthetic"     # or "manifest" (with `manifest = "path.csv"`)
//! n = 100
//! size = 64
//! train_fraction = 0.9
//!
//! [model]
//! conv1_filters = 6
//! conv2_filters = 12
//! hidden = 50
//!
//! [train]
//! learning_rate = 0.01
//! epochs = 30
//! batch_size = 8
//!
//! [attack]
//! grid = "full"            # small | high | full, or `epsilons = [...]`
//! clip = true
//!
//! [output]
//! formats = ["csv", "svg", "json"]
//! ```
//!
//! Every stage seed defaults to the top-level `seed`; `data.seed`,
//! `data.split_seed` and `train.seed` override it individually.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{named_grid, AttackConfig, ClipBounds};
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_WINDOW;
use crate::nn::{ArchConfig, TrainConfig};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    #[serde(default)]
    data: RawData,
    #[serde(default)]
    model: ArchConfig,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    attack: RawAttack,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    source: Option<String>,
    n: Option<usize>,
    size: Option<usize>,
    seed: Option<u64>,
    manifest: Option<PathBuf>,
    train_fraction: Option<f64>,
    split_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    learning_rate: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    grid: Option<String>,
    epsilons: Option<Vec<f64>>,
    clip: Option<bool>,
    clip_lo: Option<f64>,
    clip_hi: Option<f64>,
    ssim_window: Option<usize>,
    ssim_dynamic_range: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    formats: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic { n: usize, size: usize, seed: u64 },
    Manifest { path: PathBuf, size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Svg,
    Json,
    /// Adversarial image dumps.
    Pgm,
}

impl ReportFormat {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            "json" => Ok(Self::Json),
            "pgm" => Ok(Self::Pgm),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSettings {
    /// Sweep order; always starts with ε = 0.
    pub epsilons: Vec<f64>,
    pub clip: Option<ClipBounds>,
    pub ssim_window: usize,
    pub ssim_dynamic_range: f64,
}

impl AttackSettings {
    pub fn to_attack_config(&self) -> Result<AttackConfig> {
        let mut cfg = AttackConfig::new(self.epsilons.clone())?.with_clip(self.clip)?;
        cfg.ssim_window = self.ssim_window;
        cfg.ssim_dynamic_range = self.ssim_dynamic_range;
        Ok(cfg)
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub model: ArchConfig,
    pub train: TrainConfig,
    pub attack: AttackSettings,
    pub output_dir: Option<PathBuf>,
    pub formats: Vec<ReportFormat>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::resolve(RawConfig::default(), Path::new("."), None).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Parses a TOML document. Relative manifest paths resolve against
    /// `base_dir`. `seed_override` replaces the top-level seed and every
    /// per-stage seed.
    pub fn from_toml(text: &str, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::resolve(raw, base_dir, seed_override)
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, seed_override)
    }

    fn resolve(raw: RawConfig, base_dir: &Path, seed_override: Option<u64>) -> Result<Self> {
        let seed = seed_override.or(raw.seed).unwrap_or(0);
        let stage_seed = |s: Option<u64>| {
            if seed_override.is_some() {
                seed
            } else {
                s.unwrap_or(seed)
            }
        };
        let size = raw.data.size.unwrap_or(64);

        let data = match raw.data.source.as_deref().unwrap_or("synthetic") {
            "synthetic" => {
                if raw.data.manifest.is_some() {
                    return Err(Error::Config(
                        "`manifest` given for a synthetic source".into(),
                    ));
                }
                DataSource::Synthetic {
                    n: raw.data.n.unwrap_or(100),
                    size,
                    seed: stage_seed(raw.data.seed),
                }
            }
            "manifest" => {
                let path = raw
                    .data
                    .manifest
                    .ok_or_else(|| Error::Config("manifest source needs `data.manifest`".into()))?;
                if raw.data.n.is_some() {
                    return Err(Error::Config("`n` only applies to synthetic data".into()));
                }
                DataSource::Manifest {
                    path: if path.is_absolute() {
                        path
                    } else {
                        base_dir.join(path)
                    },
                    size,
                }
            }
            other => return Err(Error::Config(format!("unknown data source {other:?}"))),
        };
        if let DataSource::Synthetic { n, .. } = data {
            if n < 10 {
                return Err(Error::Config(format!(
                    "data.n = {n}; at least 10 images are needed"
                )));
            }
        }
        if size < 8 {
            return Err(Error::Config(format!("data.size = {size} is too small")));
        }

        let train_fraction = raw.data.train_fraction.unwrap_or(0.9);
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {train_fraction} is not in (0, 1)"
            )));
        }

        let defaults = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: raw.train.learning_rate.unwrap_or(defaults.learning_rate),
            epochs: raw.train.epochs.unwrap_or(defaults.epochs),
            batch_size: raw.train.batch_size.unwrap_or(defaults.batch_size),
            seed: stage_seed(raw.train.seed),
        };
        train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if raw.model.conv1_filters == 0 || raw.model.conv2_filters == 0 || raw.model.hidden == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }

        let mut epsilons = match (raw.attack.grid, raw.attack.epsilons) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either attack.grid or attack.epsilons, not both".into(),
                ))
            }
            (_, Some(list)) => list,
            (grid, None) => {
                let name = grid.unwrap_or_else(|| "full".into());
                named_grid(&name)
                    .ok_or_else(|| Error::Config(format!("unknown epsilon grid {name:?}")))?
            }
        };
        if !epsilons.contains(&0.0) {
            epsilons.insert(0, 0.0);
        }
        let clip = if raw.attack.clip.unwrap_or(true) {
            Some(ClipBounds {
                lo: raw.attack.clip_lo.unwrap_or(0.0),
                hi: raw.attack.clip_hi.unwrap_or(1.0),
            })
        } else {
            None
        };
        let attack = AttackSettings {
            epsilons,
            clip,
            ssim_window: raw.attack.ssim_window.unwrap_or(DEFAULT_WINDOW),
            ssim_dynamic_range: raw.attack.ssim_dynamic_range.unwrap_or(1.0),
        };
        attack
            .to_attack_config()
            .map_err(|e| Error::Config(e.to_string()))?;
        if attack.ssim_window == 0
            || !attack.ssim_dynamic_range.is_finite()
            || attack.ssim_dynamic_range <= 0.0
        {
            return Err(Error::Config(
                "ssim window and dynamic range must be positive".into(),
            ));
        }

        let formats = match raw.output.formats {
            Some(list) => list
                .iter()
                .map(|s| ReportFormat::parse(s))
                .collect::<Result<Vec<_>>>()?,
            None => vec![ReportFormat::Csv, ReportFormat::Svg, ReportFormat::Json],
        };

        Ok(Self {
            seed,
            data,
            train_fraction,
            split_seed: stage_seed(raw.data.split_seed),
            model: raw.model,
            train,
            attack,
            output_dir: raw
                .output
                .dir
                .map(|d| if d.is_absolute() { d } else { base_dir.join(d) }),
            formats,
        })
    }

    pub fn wants(&self, format: ReportFormat) -> bool {
        self.formats.contains(&format)
    }

    pub fn image_size(&self) -> usize {
        match self.data {
            DataSource::Synthetic { size, .. } | DataSource::Manifest { size, .. } => size,
        }
    }
}
