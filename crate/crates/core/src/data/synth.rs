//! Seeded synthetic stand-in for a small mammography subset.
//!
//! Normal images are a smooth low-frequency background: a coarse grid of
//! Gaussian noise around a fixed tissue level, upsampled bilinearly.
//! Cancer images add one to three bright Gaussian blobs ("masses") on top of
//! such a background. Every image draws from its own RNG stream, so image
//! `i` depends only on `(seed, i)`.

use super::resize::resize_bilinear;
use super::{Dataset, DatasetSource, LabeledImage, CANCER, NORMAL};
use crate::error::{Error, Result};
use crate::tensor::{rng_normal, SeededRng, Tensor};

const NORMAL_FRACTION: f64 = 0.7;
const BACKGROUND_LEVEL: f64 = 0.3;
const BACKGROUND_STDDEV: f64 = 0.05;
const COARSE_GRID: usize = 8;
const MIN_SIZE: usize = 8;
const MIN_COUNT: usize = 10;

fn background(rng: &mut SeededRng, size: usize) -> Result<Tensor> {
    let coarse = rng_normal(
        rng,
        &[1, COARSE_GRID, COARSE_GRID],
        BACKGROUND_LEVEL,
        BACKGROUND_STDDEV,
    )?;
    resize_bilinear(&coarse, size, size)
}

fn add_blobs(img: &mut Tensor, rng: &mut SeededRng, size: usize) {
    let s = size as f64;
    let count = rng.int_inclusive(1, 3);
    for _ in 0..count {
        let cy = rng.uniform(0.2 * s, 0.8 * s);
        let cx = rng.uniform(0.2 * s, 0.8 * s);
        let sigma = rng.uniform(0.12 * s, 0.2 * s);
        let amplitude = rng.uniform(0.35, 0.55);
        let denom = 2.0 * sigma * sigma;
        for (k, v) in img.data_mut().iter_mut().enumerate() {
            let (y, x) = ((k / size) as f64, (k % size) as f64);
            let d2 = (y - cy).powi(2) + (x - cx).powi(2);
            *v += amplitude * (-d2 / denom).exp();
        }
    }
}

/// `round(0.7·n)` normal images followed by cancer images, each
/// `1×size×size` with pixels in `[0, 1]`.
pub fn synth_dataset(n: usize, size: usize, seed: u64) -> Result<Dataset> {
    if n < MIN_COUNT {
        return Err(Error::arg(format!(
            "synthetic dataset needs at least {MIN_COUNT} images, got {n}"
        )));
    }
    if size < MIN_SIZE {
        return Err(Error::arg(format!(
            "image size must be at least {MIN_SIZE}, got {size}"
        )));
    }
    let normals = (NORMAL_FRACTION * n as f64).round() as usize;
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = SeededRng::with_stream(seed, 1000 + i as u64);
        let mut img = background(&mut rng, size)?;
        let label = if i < normals { NORMAL } else { CANCER };
        if label == CANCER {
            add_blobs(&mut img, &mut rng, size);
        }
        items.push(LabeledImage {
            pixels: img.clamp(0.0, 1.0)?,
            label,
            id: format!("synth-{i:04}"),
        });
    }
    Dataset::new(items, DatasetSource::Synthetic { seed })
}
