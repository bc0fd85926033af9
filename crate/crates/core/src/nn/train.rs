//! Mini-batch SGD.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Backward, Gradients, Model};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::SeededRng;

const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::arg(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Training accuracy of the predictions made during the epoch, before
    /// each batch's update.
    pub accuracy: f64,
}

/// `p ← p − lr·g` for every parameter tensor.
pub fn sgd_step(model: &mut Model, grads: &Gradients, lr: f64) -> Result<()> {
    if grads.layers.len() != model.params().len() {
        return Err(Error::shape("gradient layout does not match model"));
    }
    for (p, g) in model.params_mut().iter_mut().zip(&grads.layers) {
        match (p, g) {
            (Some(p), Some(g)) => {
                if p.weight.shape() != g.weight.shape() || p.bias.shape() != g.bias.shape() {
                    return Err(Error::shape("gradient shape does not match parameter"));
                }
                for (w, d) in p.weight.data_mut().iter_mut().zip(g.weight.data()) {
                    *w -= lr * d;
                }
                for (b, d) in p.bias.data_mut().iter_mut().zip(g.bias.data()) {
                    *b -= lr * d;
                }
                if !p
                    .weight
                    .data()
                    .iter()
                    .chain(p.bias.data())
                    .all(|v| v.is_finite())
                {
                    return Err(Error::NonFinite("sgd_step"));
                }
            }
            (None, None) => {}
            _ => return Err(Error::shape("gradient layout does not match model")),
        }
    }
    Ok(())
}

/// Trains `model` in place of its current parameters. The batch gradient is
/// the mean of per-sample gradients, summed in batch order so the result
/// does not depend on thread scheduling.
pub fn train(
    mut model: Model,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<EpochStats>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    for item in data.items() {
        if item.pixels.shape() != model.input_shape() {
            return Err(Error::shape(format!(
                "image {} has shape {:?}, model expects {:?}",
                item.id,
                item.pixels.shape(),
                model.input_shape()
            )));
        }
    }

    let mut rng = SeededRng::with_stream(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Backward> = batch
                .par_iter()
                .map(|&i| {
                    let item = &data.items()[i];
                    model.backward(&item.pixels, item.label)
                })
                .collect::<Result<_>>()?;
            let mut grads = Gradients::zeros_like(&model);
            for (r, &i) in results.iter().zip(batch) {
                grads.accumulate(&r.param_grads)?;
                loss_sum += r.loss.value;
                let p = r.loss.probabilities.data();
                let predicted = if p[1] > p[0] { 1 } else { 0 };
                if predicted == data.items()[i].label {
                    correct += 1;
                }
            }
            grads.scale(1.0 / batch.len() as f64);
            sgd_step(&mut model, &grads, cfg.learning_rate)?;
        }
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok((model, history))
}
