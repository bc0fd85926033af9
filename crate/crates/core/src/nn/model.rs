//! The classifier: a validated stack of layers with its parameters.

use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward_with_patches, conv2d_forward_with_patches, fc_backward, fc_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, KERNEL, POOL,
};
use super::loss::{softmax_cross_entropy, LossValue, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::{rng_uniform, SeededRng, Tensor};

/// Stream of the init RNG; training shuffles on a different stream.
pub(crate) const INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// 5×5 valid convolution, stride 1.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    /// 2×2 max pooling, stride 2.
    MaxPool,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => Some((
                vec![out_channels, in_channels, KERNEL, KERNEL],
                vec![out_channels],
            )),
            LayerSpec::Dense { inputs, outputs } => Some((vec![outputs, inputs], vec![outputs])),
            _ => None,
        }
    }

    /// Fan-in and fan-out used for Glorot initialisation.
    fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => (
                in_channels * KERNEL * KERNEL,
                out_channels * KERNEL * KERNEL,
            ),
            LayerSpec::Dense { inputs, outputs } => (inputs, outputs),
            _ => (0, 0),
        }
    }
}

/// Widths of the default two-conv, two-pool, two-FC topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub hidden: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            conv1_filters: 6,
            conv2_filters: 12,
            hidden: 50,
        }
    }
}

/// conv → relu → pool → conv → relu → pool → flatten → FC → relu → FC(·, 2).
/// The flatten width is derived from `input_shape`.
pub fn default_layers(input_shape: [usize; 3], arch: &ArchConfig) -> Result<Vec<LayerSpec>> {
    let [c, h, w] = input_shape;
    let after = |e: usize| e.checked_sub(KERNEL - 1).map(|v| v / POOL);
    let (h2, w2) = match (after(h).and_then(after), after(w).and_then(after)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::shape(format!(
                "input {h}×{w} is too small for the default architecture"
            )))
        }
    };
    let layers = vec![
        LayerSpec::Conv2d {
            in_channels: c,
            out_channels: arch.conv1_filters,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Conv2d {
            in_channels: arch.conv1_filters,
            out_channels: arch.conv2_filters,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: arch.conv2_filters * h2 * w2,
            outputs: arch.hidden,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            inputs: arch.hidden,
            outputs: NUM_CLASSES,
        },
    ];
    infer_shapes(input_shape, &layers)?;
    Ok(layers)
}

/// Output shape after every layer, or an error naming the first layer whose
/// input does not fit. The final output must be the two class logits.
pub fn infer_shapes(input_shape: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if input_shape.contains(&0) {
        return Err(Error::shape(format!(
            "input shape {input_shape:?} has a zero extent"
        )));
    }
    let mut shape = input_shape.to_vec();
    let mut shapes = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let bad = |msg: String| Error::shape(format!("layer {i} ({layer:?}): {msg}"));
        shape = match (*layer, &shape[..]) {
            (
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                },
                &[c, h, w],
            ) => {
                if c != in_channels || out_channels == 0 {
                    return Err(bad(format!("input has {c} channels")));
                }
                if h < KERNEL || w < KERNEL {
                    return Err(bad(format!("input {h}×{w} smaller than kernel")));
                }
                vec![out_channels, h - KERNEL + 1, w - KERNEL + 1]
            }
            (LayerSpec::MaxPool, &[c, h, w]) => {
                if h % POOL != 0 || w % POOL != 0 {
                    return Err(bad(format!("pool input {h}×{w} has an odd extent")));
                }
                vec![c, h / POOL, w / POOL]
            }
            (LayerSpec::Relu, s) => s.to_vec(),
            (LayerSpec::Flatten, s) => vec![s.iter().product()],
            (LayerSpec::Dense { inputs, outputs }, &[n]) => {
                if n != inputs || outputs == 0 {
                    return Err(bad(format!("input width {n}")));
                }
                vec![outputs]
            }
            (_, s) => return Err(bad(format!("unsupported input shape {s:?}"))),
        };
        shapes.push(shape.clone());
    }
    if shape != [NUM_CLASSES] {
        return Err(Error::shape(format!(
            "network ends in shape {shape:?}, expected [{NUM_CLASSES}]"
        )));
    }
    Ok(shapes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Per-layer parameter gradients, aligned with [`Model::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<Params>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model
                .params
                .iter()
                .map(|p| {
                    p.as_ref().map(|p| Params {
                        weight: Tensor::zeros(p.weight.shape()),
                        bias: Tensor::zeros(p.bias.shape()),
                    })
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape("gradient layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    a.weight.add_assign(&b.weight)?;
                    a.bias.add_assign(&b.bias)?;
                }
                (None, None) => {}
                _ => return Err(Error::shape("gradient layouts differ")),
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, k: f64) {
        for p in self.layers.iter_mut().flatten() {
            p.weight.data_mut().iter_mut().for_each(|v| *v *= k);
            p.bias.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }
}

/// Class decision for one input. `0` is normal, `1` is cancer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub confidence: f64,
    pub probabilities: [f64; NUM_CLASSES],
}

impl Prediction {
    fn from_probabilities(p: &Tensor) -> Self {
        let probs = [p.data()[0], p.data()[1]];
        // Strict comparison keeps ties on the lower index.
        let label = if probs[1] > probs[0] { 1 } else { 0 };
        Self {
            label,
            confidence: probs[label],
            probabilities: probs,
        }
    }
}

/// Result of a full reverse pass for one sample.
#[derive(Debug, Clone)]
pub struct Backward {
    pub param_grads: Gradients,
    pub input_grad: Tensor,
    pub loss: LossValue,
}

enum Cache {
    Conv {
        patches: Tensor,
        input_shape: Vec<usize>,
    },
    Relu {
        input: Tensor,
    },
    Pool {
        argmax: Vec<usize>,
        input_shape: Vec<usize>,
    },
    Flatten {
        input_shape: Vec<usize>,
    },
    Dense {
        input: Tensor,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    params: Vec<Option<Params>>,
}

impl Model {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(input_shape: [usize; 3], layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        infer_shapes(input_shape, &layers)?;
        let mut rng = SeededRng::with_stream(seed, INIT_STREAM);
        let mut params = Vec::with_capacity(layers.len());
        for layer in &layers {
            params.push(match layer.param_shapes() {
                Some((w, b)) => {
                    let (fan_in, fan_out) = layer.fans();
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Some(Params {
                        weight: rng_uniform(&mut rng, &w, -limit, limit)?,
                        bias: Tensor::zeros(&b),
                    })
                }
                None => None,
            });
        }
        Ok(Self {
            input_shape,
            layers,
            params,
        })
    }

    pub fn zeros(input_shape: [usize; 3], layers: Vec<LayerSpec>) -> Result<Self> {
        infer_shapes(input_shape, &layers)?;
        let params = layers
            .iter()
            .map(|l| {
                l.param_shapes().map(|(w, b)| Params {
                    weight: Tensor::zeros(&w),
                    bias: Tensor::zeros(&b),
                })
            })
            .collect();
        Ok(Self {
            input_shape,
            layers,
            params,
        })
    }

    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_params(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        params: Vec<Option<Params>>,
    ) -> Result<Self> {
        infer_shapes(input_shape, &layers)?;
        if params.len() != layers.len() {
            return Err(Error::shape("one parameter slot per layer is required"));
        }
        for (i, (layer, p)) in layers.iter().zip(&params).enumerate() {
            match (layer.param_shapes(), p) {
                (Some((w, b)), Some(p)) if p.weight.shape() == w && p.bias.shape() == b => {}
                (None, None) => {}
                _ => {
                    return Err(Error::shape(format!(
                        "parameters of layer {i} do not fit {layer:?}"
                    )))
                }
            }
        }
        Ok(Self {
            input_shape,
            layers,
            params,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Option<Params>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<Params>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::shape(format!(
                "input {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, mut caches: Option<&mut Vec<Cache>>) -> Result<Tensor> {
        self.check_input(x)?;
        let mut act = x.clone();
        for (layer, params) in self.layers.iter().zip(&self.params) {
            let (next, cache) = match (layer, params) {
                (LayerSpec::Conv2d { .. }, Some(p)) => {
                    let (out, patches) = conv2d_forward_with_patches(&act, &p.weight, &p.bias)?;
                    let shape = act.shape().to_vec();
                    (
                        out,
                        Cache::Conv {
                            patches,
                            input_shape: shape,
                        },
                    )
                }
                (LayerSpec::Relu, None) => (relu_forward(&act), Cache::Relu { input: act }),
                (LayerSpec::MaxPool, None) => {
                    let (out, argmax) = maxpool_forward(&act)?;
                    let shape = act.shape().to_vec();
                    (
                        out,
                        Cache::Pool {
                            argmax,
                            input_shape: shape,
                        },
                    )
                }
                (LayerSpec::Flatten, None) => {
                    let shape = act.shape().to_vec();
                    (
                        act.reshape(&[act.len()])?,
                        Cache::Flatten { input_shape: shape },
                    )
                }
                (LayerSpec::Dense { .. }, Some(p)) => (
                    fc_forward(&act, &p.weight, &p.bias)?,
                    Cache::Dense { input: act },
                ),
                _ => return Err(Error::shape(format!("missing parameters for {layer:?}"))),
            };
            if let Some(c) = caches.as_deref_mut() {
                c.push(cache);
            }
            act = next;
        }
        Ok(act)
    }

    /// Output logits for one `C×H×W` input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, None)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Prediction> {
        let logits = self.forward(x)?;
        let (loss, _) = softmax_cross_entropy(&logits, 0)?;
        Ok(Prediction::from_probabilities(&loss.probabilities))
    }

    /// Loss at `(x, y)` without building gradients.
    pub fn loss(&self, x: &Tensor, y: usize) -> Result<LossValue> {
        softmax_cross_entropy(&self.forward(x)?, y).map(|(l, _)| l)
    }

    /// Reverse-mode gradients of the cross-entropy loss at label `y` with
    /// respect to every parameter and to the input itself.
    pub fn backward(&self, x: &Tensor, y: usize) -> Result<Backward> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let logits = self.run(x, Some(&mut caches))?;
        let (loss, mut grad) = softmax_cross_entropy(&logits, y)?;
        let mut param_grads = vec![None; self.layers.len()];
        for (i, cache) in caches.into_iter().enumerate().rev() {
            grad = match cache {
                Cache::Conv {
                    patches,
                    input_shape,
                } => {
                    let p = self.params[i].as_ref().expect("conv parameters");
                    let g = conv2d_backward_with_patches(&input_shape, &patches, &p.weight, &grad)?;
                    param_grads[i] = Some(Params {
                        weight: g.kernels,
                        bias: g.bias,
                    });
                    g.input
                }
                Cache::Relu { input } => relu_backward(&input, &grad)?,
                Cache::Pool {
                    argmax,
                    input_shape,
                } => maxpool_backward(&grad, &argmax, &input_shape)?,
                Cache::Flatten { input_shape } => grad.reshape(&input_shape)?,
                Cache::Dense { input } => {
                    let p = self.params[i].as_ref().expect("dense parameters");
                    let g = fc_backward(&input, &p.weight, &grad)?;
                    param_grads[i] = Some(Params {
                        weight: g.weights,
                        bias: g.bias,
                    });
                    g.input
                }
            };
        }
        Ok(Backward {
            param_grads: Gradients {
                layers: param_grads,
            },
            input_grad: grad,
            loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_layers() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 32,
                outputs: 4,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: 4,
                outputs: 2,
            },
        ]
    }

    #[test]
    fn default_architecture_shapes() {
        let layers = default_layers([1, 64, 64], &ArchConfig::default()).unwrap();
        let shapes = infer_shapes([1, 64, 64], &layers).unwrap();
        assert_eq!(shapes[2], vec![6, 30, 30]);
        assert_eq!(shapes[5], vec![12, 13, 13]);
        assert_eq!(shapes[6], vec![12 * 13 * 13]);
        assert_eq!(shapes[7], vec![50]);
        assert_eq!(shapes.last().unwrap(), &vec![2]);

        let layers = default_layers([1, 256, 256], &ArchConfig::default()).unwrap();
        assert_eq!(
            layers[7],
            LayerSpec::Dense {
                inputs: 12 * 61 * 61,
                outputs: 50
            }
        );
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        // 12 → conv 8 → pool 4 → conv would need 5.
        assert!(default_layers([1, 12, 12], &ArchConfig::default()).is_err());
        // 63 → conv 59 → odd pool input.
        assert!(default_layers([1, 63, 63], &ArchConfig::default()).is_err());
        assert!(infer_shapes([1, 13, 12], &tiny_layers()).is_err());
        let mut wrong_width = tiny_layers();
        wrong_width[4] = LayerSpec::Dense {
            inputs: 31,
            outputs: 4,
        };
        assert!(infer_shapes([1, 12, 12], &wrong_width).is_err());
        assert!(infer_shapes([1, 12, 12], &tiny_layers()[..5]).is_err());
        assert!(infer_shapes([1, 12, 12], &tiny_layers()).is_ok());
    }

    #[test]
    fn zero_model_has_flat_output() {
        let model = Model::zeros([1, 12, 12], tiny_layers()).unwrap();
        let x = Tensor::full(&[1, 12, 12], 0.4);
        let p = model.predict(&x).unwrap();
        assert_eq!(p.probabilities, [0.5, 0.5]);
        assert_eq!(p.label, 0);
        let b = model.backward(&x, 1).unwrap();
        assert!(b.input_grad.data().iter().all(|&g| g == 0.0));
        assert!((b.loss.value - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Model::init([1, 12, 12], tiny_layers(), 5).unwrap();
        let b = Model::init([1, 12, 12], tiny_layers(), 5).unwrap();
        let c = Model::init([1, 12, 12], tiny_layers(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let conv = a.params()[0].as_ref().unwrap();
        let limit = (6.0f64 / (25.0 + 50.0)).sqrt();
        assert!(conv.weight.data().iter().all(|v| v.abs() <= limit));
        assert!(conv.bias.data().iter().all(|&v| v == 0.0));
        assert_eq!(a.param_count(), 2 * 25 + 2 + 32 * 4 + 4 + 4 * 2 + 2);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let model = Model::zeros([1, 12, 12], tiny_layers()).unwrap();
        assert!(matches!(
            model.predict(&Tensor::zeros(&[1, 12, 14])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn from_params_checks_shapes() {
        let model = Model::init([1, 12, 12], tiny_layers(), 1).unwrap();
        let mut params = model.params().to_vec();
        assert!(Model::from_params([1, 12, 12], tiny_layers(), params.clone()).is_ok());
        params[4] = None;
        assert!(Model::from_params([1, 12, 12], tiny_layers(), params).is_err());
    }
}
