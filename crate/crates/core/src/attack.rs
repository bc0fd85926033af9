//! Fast gradient sign attack and the ε sweep built on it.
//!
//! For an input `x` with true label `y` the adversarial image is
//! `x̂ = clip(x + ε·sign(∇ₓ C(M, x, y)))`. The perturbation budget is
//! absolute and measured in L∞: every pixel moves by at most `ε`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{ssim, DEFAULT_WINDOW};
use crate::nn::{Model, Prediction};
use crate::tensor::Tensor;

pub const SMALL_GRID: [f64; 5] = [0.001, 0.005, 0.01, 0.02, 0.05];
pub const HIGH_GRID: [f64; 6] = [0.1, 0.2, 0.3, 0.5, 0.7, 0.9];

/// Named ε grids: `small`, `high`, or `full` (both).
pub fn named_grid(name: &str) -> Option<Vec<f64>> {
    match name {
        "small" => Some(SMALL_GRID.to_vec()),
        "high" => Some(HIGH_GRID.to_vec()),
        "full" => Some(SMALL_GRID.iter().chain(&HIGH_GRID).copied().collect()),
        _ => None,
    }
}

/// The perturbation norm. Only L∞ is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormOrder {
    #[default]
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ClipBounds {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    epsilons: Vec<f64>,
    norm_order: NormOrder,
    /// `None` leaves `x + δx` unclipped.
    pub clip: Option<ClipBounds>,
    pub ssim_window: usize,
    pub ssim_dynamic_range: f64,
}

fn check_epsilon(eps: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::arg(format!("epsilon {eps} is outside [0, 1]")))
    }
}

impl AttackConfig {
    pub fn new(epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() {
            return Err(Error::arg("epsilon list is empty"));
        }
        for &e in &epsilons {
            check_epsilon(e)?;
        }
        Ok(Self {
            epsilons,
            norm_order: NormOrder::Infinity,
            clip: Some(ClipBounds::default()),
            ssim_window: DEFAULT_WINDOW,
            ssim_dynamic_range: 1.0,
        })
    }

    pub fn with_clip(mut self, clip: Option<ClipBounds>) -> Result<Self> {
        if let Some(c) = clip {
            if c.lo.is_nan() || c.hi.is_nan() || c.lo > c.hi {
                return Err(Error::arg(format!(
                    "clip bounds out of order: [{}, {}]",
                    c.lo, c.hi
                )));
            }
        }
        self.clip = clip;
        Ok(self)
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn norm_order(&self) -> NormOrder {
        self.norm_order
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSample {
    pub original: Tensor,
    pub perturbed: Tensor,
    pub epsilon: f64,
    pub true_label: usize,
    pub clean_prediction: Prediction,
    pub adv_prediction: Prediction,
    /// The attack turned a correct prediction into a wrong one.
    pub flipped: bool,
}

fn check_in_bounds(x: &Tensor, clip: Option<ClipBounds>) -> Result<()> {
    if let Some(c) = clip {
        if x.min() < c.lo || x.max() > c.hi {
            return Err(Error::arg(format!(
                "input lies outside the clip range [{}, {}]",
                c.lo, c.hi
            )));
        }
    }
    Ok(())
}

/// `clip(x + eps·direction)`; returns `x` itself for `eps = 0`.
fn perturb(x: &Tensor, direction: &Tensor, eps: f64, clip: Option<ClipBounds>) -> Result<Tensor> {
    if eps == 0.0 {
        return Ok(x.clone());
    }
    let stepped = x.add(&direction.scale(eps)?)?;
    match clip {
        Some(c) => stepped.clamp(c.lo, c.hi),
        None => Ok(stepped),
    }
}

/// Sign of the loss gradient with respect to the input, taken at the true
/// label.
pub fn gradient_sign(model: &Model, x: &Tensor, y: usize) -> Result<Tensor> {
    Ok(model.backward(x, y)?.input_grad.sign())
}

/// One untargeted FGSM step of size `eps`.
pub fn fgsm(
    model: &Model,
    x: &Tensor,
    y: usize,
    eps: f64,
    clip: Option<ClipBounds>,
) -> Result<AdversarialSample> {
    check_epsilon(eps)?;
    check_in_bounds(x, clip)?;
    let backward = model.backward(x, y)?;
    let perturbed = perturb(x, &backward.input_grad.sign(), eps, clip)?;
    let clean_prediction = model.predict(x)?;
    let adv_prediction = model.predict(&perturbed)?;
    Ok(AdversarialSample {
        original: x.clone(),
        perturbed,
        epsilon: eps,
        true_label: y,
        clean_prediction,
        adv_prediction,
        flipped: clean_prediction.label == y && adv_prediction.label != y,
    })
}

/// Outcome for one test image at one ε.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub id: String,
    pub true_label: usize,
    pub clean_label: usize,
    pub adv_label: usize,
    pub flipped: bool,
    pub ssim: f64,
    /// L∞ distance actually applied.
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub epsilon: f64,
    /// Fraction of adversarial images classified correctly.
    pub accuracy: f64,
    pub mean_ssim: f64,
    pub n_samples: usize,
    /// Per-image outcomes in test-set order.
    pub samples: Vec<SampleOutcome>,
}

/// Attacks every test image at every ε of `cfg`, in the given order.
///
/// The input gradient does not depend on ε, so it is computed once per
/// image. Images are processed in parallel; aggregation runs in test-set
/// order and is therefore independent of scheduling.
pub fn epsilon_sweep(
    model: &Model,
    testset: &Dataset,
    cfg: &AttackConfig,
) -> Result<Vec<SweepRecord>> {
    if testset.is_empty() {
        return Err(Error::arg("test set is empty"));
    }
    let per_image: Vec<Vec<SampleOutcome>> = testset
        .items()
        .par_iter()
        .map(|item| {
            let x = &item.pixels;
            check_in_bounds(x, cfg.clip)?;
            let direction = gradient_sign(model, x, item.label)?;
            let clean = model.predict(x)?;
            let [_, h, w] = model.input_shape();
            let window = cfg.ssim_window.min(h).min(w);
            cfg.epsilons
                .iter()
                .map(|&eps| {
                    let adv = perturb(x, &direction, eps, cfg.clip)?;
                    let pred = model.predict(&adv)?;
                    Ok(SampleOutcome {
                        id: item.id.clone(),
                        true_label: item.label,
                        clean_label: clean.label,
                        adv_label: pred.label,
                        flipped: clean.label == item.label && pred.label != item.label,
                        ssim: ssim(x, &adv, window, cfg.ssim_dynamic_range)?.mean_ssim,
                        linf: adv.max_abs_diff(x)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let n = testset.len();
    Ok(cfg
        .epsilons
        .iter()
        .enumerate()
        .map(|(k, &epsilon)| {
            let samples: Vec<SampleOutcome> = per_image.iter().map(|s| s[k].clone()).collect();
            let correct = samples
                .iter()
                .filter(|s| s.adv_label == s.true_label)
                .count();
            let ssim_sum: f64 = samples.iter().map(|s| s.ssim).sum();
            SweepRecord {
                epsilon,
                accuracy: correct as f64 / n as f64,
                mean_ssim: ssim_sum / n as f64,
                n_samples: n,
                samples,
            }
        })
        .collect())
}
