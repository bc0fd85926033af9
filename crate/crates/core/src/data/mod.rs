//! Labelled grayscale images: import, synthesis and train/test splitting.

mod pgm;
mod resize;
mod synth;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

pub use pgm::{load_pgm, save_pgm, PgmImage};
pub use resize::resize_bilinear;
pub use synth::synth_dataset;

use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

pub const NORMAL: usize = 0;
pub const CANCER: usize = 1;

const SPLIT_STREAM: u64 = 3;

pub fn label_name(label: usize) -> &'static str {
    match label {
        NORMAL => "normal",
        CANCER => "cancer",
        _ => "unknown",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// `1×H×W`, values in `[0, 1]`.
    pub pixels: Tensor,
    pub label: usize,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic { seed: u64 },
    Imported { manifest: PathBuf },
    Split { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    items: Vec<LabeledImage>,
    source: DatasetSource,
}

impl Dataset {
    /// Checks labels, pixel range and id uniqueness.
    pub fn new(items: Vec<LabeledImage>, source: DatasetSource) -> Result<Self> {
        let mut seen = HashSet::new();
        for item in &items {
            if item.label > CANCER {
                return Err(Error::Data(format!(
                    "{}: label {} is not 0 or 1",
                    item.id, item.label
                )));
            }
            if item.pixels.min() < 0.0 || item.pixels.max() > 1.0 {
                return Err(Error::Data(format!("{}: pixels outside [0, 1]", item.id)));
            }
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Data(format!("duplicate image id {}", item.id)));
            }
        }
        Ok(Self { items, source })
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn source(&self) -> &DatasetSource {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count_label(&self, label: usize) -> usize {
        self.items.iter().filter(|it| it.label == label).count()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|it| it.label).collect()
    }
}

/// Stratified split. `round(train_fraction·n)` items go to training; the
/// per-class quotas are assigned by largest remainder so the class ratio of
/// each side stays within one item of the source. Items are drawn by a
/// seeded per-class shuffle; both sides keep the source order.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::arg(format!(
            "train fraction {train_fraction} is not in (0, 1)"
        )));
    }
    let n = ds.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::arg(format!(
            "fraction {train_fraction} of {n} items leaves an empty side"
        )));
    }

    let by_class: Vec<Vec<usize>> = [NORMAL, CANCER]
        .iter()
        .map(|&l| (0..n).filter(|&i| ds.items[i].label == l).collect())
        .collect();
    let quotas: Vec<f64> = by_class
        .iter()
        .map(|c| n_train as f64 * c.len() as f64 / n as f64)
        .collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = n_train - take.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(2 * order.len()) {
        if remaining == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }

    let mut rng = SeededRng::with_stream(seed, SPLIT_STREAM);
    let mut in_train = vec![false; n];
    for (class, &k) in by_class.iter().zip(&take) {
        let mut members = class.clone();
        rng.shuffle(&mut members);
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = ds
        .items
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(LabeledImage, bool)>| v.into_iter().map(|(it, _)| it).collect();
    Ok((
        Dataset::new(strip(train), DatasetSource::Split { seed })?,
        Dataset::new(strip(test), DatasetSource::Split { seed })?,
    ))
}

fn parse_label(s: &str) -> Option<usize> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "normal" => Some(NORMAL),
        "1" | "cancer" => Some(CANCER),
        _ => None,
    }
}

/// Reads a manifest of `id,relative_path,label` lines (paths relative to the
/// manifest's directory). Blank lines and `#` comments are skipped. Each
/// image is resized to `size×size` when it differs.
pub fn load_manifest(path: &Path, size: usize) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [id, rel, label] = fields[..] else {
            return Err(Error::Data(format!(
                "{}:{}: expected id,path,label",
                path.display(),
                lineno + 1
            )));
        };
        let label = parse_label(label).ok_or_else(|| {
            Error::Data(format!(
                "{}:{}: bad label {label:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let mut pixels = load_pgm(&base.join(rel))?;
        if pixels.shape() != [1, size, size] {
            pixels = resize_bilinear(&pixels, size, size)?;
        }
        items.push(LabeledImage {
            pixels,
            label,
            id: id.to_string(),
        });
    }
    if items.is_empty() {
        return Err(Error::Data(format!(
            "{}: manifest lists no images",
            path.display()
        )));
    }
    Dataset::new(
        items,
        DatasetSource::Imported {
            manifest: path.to_path_buf(),
        },
    )
}

/// Writes every image as `<dir>/images/<id>.pgm` plus `<dir>/manifest.csv`.
pub fn export_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut manifest = String::new();
    for item in ds.items() {
        let rel = format!("images/{}.pgm", item.id);
        save_pgm(&dir.join(&rel), &item.pixels, 255)?;
        manifest.push_str(&format!("{},{},{}\n", item.id, rel, item.label));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
