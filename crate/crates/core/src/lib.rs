//! Adversarial robustness benchmark for small grayscale image classifiers.
//!
//! A from-scratch convolutional network is trained on labelled images,
//! attacked with the fast gradient sign method over a grid of perturbation
//! sizes, and the damage is measured as accuracy and SSIM per ε.

pub mod attack;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{SeededRng, Tensor};
