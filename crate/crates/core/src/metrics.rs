//! Structural similarity and classification accuracy.
//!
//! SSIM uses a uniform `window × window` sliding window with stride 1 and
//! biased (divide-by-n) moments. Window moments are computed with a
//! separable box filter: each horizontal run is summed afresh, then the
//! vertical runs of those sums, so no long running accumulator is needed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::Prediction;
use crate::tensor::Tensor;

pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const DEFAULT_WINDOW: usize = 8;

/// Luminance, contrast and structure terms of one window, with the combined
/// index. `luminance * contrast * structure == ssim` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsimWindow {
    pub luminance: f64,
    pub contrast: f64,
    pub structure: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsimReport {
    pub mean_ssim: f64,
    pub per_window: Option<Vec<SsimWindow>>,
    pub window_size: usize,
    pub c1: f64,
    pub c2: f64,
}

fn plane(t: &Tensor) -> Result<(usize, usize)> {
    match t.shape()[..] {
        [h, w] | [1, h, w] => Ok((h, w)),
        _ => Err(Error::shape(format!(
            "ssim expects a single-channel image, got {:?}",
            t.shape()
        ))),
    }
}

/// Sum of every `win × win` block, as an `(h-win+1) × (w-win+1)` grid.
fn box_sums(values: &[f64], h: usize, w: usize, win: usize) -> Vec<f64> {
    let (oh, ow) = (h - win + 1, w - win + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        let row = &values[i * w..(i + 1) * w];
        for j in 0..ow {
            rows[i * ow + j] = row[j..j + win].iter().sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..win).map(|k| rows[(i + k) * ow + j]).sum();
        }
    }
    out
}

fn compute(
    x: &Tensor,
    y: &Tensor,
    window: usize,
    dynamic_range: f64,
    keep_windows: bool,
) -> Result<SsimReport> {
    let (h, w) = plane(x)?;
    if plane(y)? != (h, w) {
        return Err(Error::arg(format!(
            "ssim inputs differ in shape: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if window == 0 || window > h.min(w) {
        return Err(Error::arg(format!(
            "window {window} does not fit a {h}×{w} image"
        )));
    }
    if !dynamic_range.is_finite() || dynamic_range <= 0.0 {
        return Err(Error::arg(format!(
            "dynamic range must be positive, got {dynamic_range}"
        )));
    }
    let c1 = (K1 * dynamic_range).powi(2);
    let c2 = (K2 * dynamic_range).powi(2);
    let c3 = c2 / 2.0;

    let (a, b) = (x.data(), y.data());
    let sq = |v: &[f64]| v.iter().map(|p| p * p).collect::<Vec<_>>();
    let prod: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();
    let sum_x = box_sums(a, h, w, window);
    let sum_y = box_sums(b, h, w, window);
    let sum_xx = box_sums(&sq(a), h, w, window);
    let sum_yy = box_sums(&sq(b), h, w, window);
    let sum_xy = box_sums(&prod, h, w, window);

    let n = (window * window) as f64;
    let mut total = 0.0;
    let mut windows = keep_windows.then(|| Vec::with_capacity(sum_x.len()));
    for k in 0..sum_x.len() {
        let (mx, my) = (sum_x[k] / n, sum_y[k] / n);
        let vx = (sum_xx[k] / n - mx * mx).max(0.0);
        let vy = (sum_yy[k] / n - my * my).max(0.0);
        let cov = sum_xy[k] / n - mx * my;
        let ssim =
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        total += ssim;
        if let Some(ws) = windows.as_mut() {
            let (sx, sy) = (vx.sqrt(), vy.sqrt());
            ws.push(SsimWindow {
                luminance: (2.0 * mx * my + c1) / (mx * mx + my * my + c1),
                contrast: (2.0 * sx * sy + c2) / (vx + vy + c2),
                structure: (cov + c3) / (sx * sy + c3),
                ssim,
            });
        }
    }
    let mean_ssim = total / sum_x.len() as f64;
    if !mean_ssim.is_finite() {
        return Err(Error::NonFinite("ssim"));
    }
    Ok(SsimReport {
        mean_ssim,
        per_window: windows,
        window_size: window,
        c1,
        c2,
    })
}

/// Mean SSIM of two equally sized grayscale images (`H×W` or `1×H×W`)
/// whose values lie in `[0, dynamic_range]`.
pub fn ssim(x: &Tensor, y: &Tensor, window: usize, dynamic_range: f64) -> Result<SsimReport> {
    compute(x, y, window, dynamic_range, false)
}

/// As [`ssim`], additionally reporting each window's components in
/// row-major window order.
pub fn ssim_detailed(
    x: &Tensor,
    y: &Tensor,
    window: usize,
    dynamic_range: f64,
) -> Result<SsimReport> {
    compute(x, y, window, dynamic_range, true)
}

/// Fraction of predictions whose label matches.
pub fn accuracy(predictions: &[Prediction], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::arg("accuracy of an empty set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &l)| p.label == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
