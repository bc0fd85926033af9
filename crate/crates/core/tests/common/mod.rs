//! Reference implementations shared by the integration tests. Everything in
//! here is written as plain loops over raw slices so it shares no code with
//! the library kernels it checks.

#![allow(dead_code)]

use std::path::PathBuf;

use advbench::nn::{LayerSpec, Model, Params};
use advbench::{SeededRng, Tensor};

pub const K: usize = 5;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn default_config_path() -> PathBuf {
    workspace_root().join("configs/default.toml")
}

pub fn random_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

pub fn random_tensor(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, random_vec(rng, n, lo, hi)).unwrap()
}

/// Valid 5×5 cross-correlation, stride 1, straight from the definition.
pub fn conv_oracle(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: &[f64],
    f: usize,
    b: &[f64],
) -> Vec<f64> {
    let (oh, ow) = (h - K + 1, w - K + 1);
    let mut out = vec![0.0; f * oh * ow];
    for o in 0..f {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b[o];
                for ch in 0..c {
                    for u in 0..K {
                        for v in 0..K {
                            acc +=
                                k[((o * c + ch) * K + u) * K + v] * x[(ch * h + i + u) * w + j + v];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = acc;
            }
        }
    }
    out
}

/// 2×2 stride-2 max pool by scanning each window.
pub fn pool_oracle(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for u in 0..2 {
                    for v in 0..2 {
                        m = m.max(x[(ch * h + 2 * i + u) * w + 2 * j + v]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

pub fn matmul_oracle(a: &[f64], m: usize, n: usize, b: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * p];
    for i in 0..m {
        for j in 0..p {
            let mut s = 0.0;
            for t in 0..n {
                s += a[i * n + t] * b[t * p + j];
            }
            out[i * p + j] = s;
        }
    }
    out
}

/// Mean SSIM over every `win×win` window (stride 1), using two-pass moments
/// and the single-fraction form of the index.
pub fn ssim_oracle(x: &[f64], y: &[f64], h: usize, w: usize, win: usize, range: f64) -> f64 {
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - win {
        for j in 0..=w - win {
            let px: Vec<f64> = (0..win)
                .flat_map(|u| (0..win).map(move |v| (i + u) * w + j + v))
                .map(|p| x[p])
                .collect();
            let py: Vec<f64> = (0..win)
                .flat_map(|u| (0..win).map(move |v| (i + u) * w + j + v))
                .map(|p| y[p])
                .collect();
            let mx = px.iter().sum::<f64>() / n;
            let my = py.iter().sum::<f64>() / n;
            let vx = px.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
            let vy = py.iter().map(|a| (a - my).powi(2)).sum::<f64>() / n;
            let cov = px
                .iter()
                .zip(&py)
                .map(|(a, b)| (a - mx) * (b - my))
                .sum::<f64>()
                / n;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Logits of `model` at `x`, evaluated layer by layer with the loop oracles.
pub fn forward_oracle(model: &Model, x: &Tensor) -> Vec<f64> {
    let [mut c, mut h, mut w] = model.input_shape();
    let mut a = x.data().to_vec();
    for (layer, p) in model.layers().iter().zip(model.params()) {
        match *layer {
            LayerSpec::Conv2d { out_channels, .. } => {
                let p = p.as_ref().unwrap();
                a = conv_oracle(&a, c, h, w, p.weight.data(), out_channels, p.bias.data());
                c = out_channels;
                h -= K - 1;
                w -= K - 1;
            }
            LayerSpec::Relu => a
                .iter_mut()
                .for_each(|v| *v = if *v > 0.0 { *v } else { 0.0 }),
            LayerSpec::MaxPool => {
                a = pool_oracle(&a, c, h, w);
                h /= 2;
                w /= 2;
            }
            LayerSpec::Flatten => {}
            LayerSpec::Dense { inputs, outputs } => {
                let p = p.as_ref().unwrap();
                a = (0..outputs)
                    .map(|o| {
                        p.bias.data()[o]
                            + (0..inputs)
                                .map(|i| p.weight.data()[o * inputs + i] * a[i])
                                .sum::<f64>()
                    })
                    .collect();
            }
        }
    }
    a
}

/// `-log softmax(z)[y]`, computed naively in higher-level terms.
pub fn cross_entropy_oracle(z: &[f64], y: usize) -> f64 {
    let denom: f64 = z.iter().map(|v| v.exp()).sum();
    -(z[y].exp() / denom).ln()
}

/// Small topologies for 1×12×12 inputs that cover every layer kind.
pub fn tiny_architectures() -> Vec<Vec<LayerSpec>> {
    use LayerSpec::*;
    vec![
        vec![
            Conv2d {
                in_channels: 1,
                out_channels: 2,
            },
            Relu,
            MaxPool,
            Flatten,
            Dense {
                inputs: 32,
                outputs: 4,
            },
            Relu,
            Dense {
                inputs: 4,
                outputs: 2,
            },
        ],
        vec![
            Conv2d {
                in_channels: 1,
                out_channels: 3,
            },
            Relu,
            MaxPool,
            Flatten,
            Dense {
                inputs: 48,
                outputs: 2,
            },
        ],
        vec![
            Conv2d {
                in_channels: 1,
                out_channels: 2,
            },
            Relu,
            Conv2d {
                in_channels: 2,
                out_channels: 2,
            },
            Relu,
            MaxPool,
            Flatten,
            Dense {
                inputs: 8,
                outputs: 3,
            },
            Relu,
            Dense {
                inputs: 3,
                outputs: 2,
            },
        ],
    ]
}

/// Model with weights in ±0.5 and biases in ±0.1, drawn from `rng`.
pub fn random_model(rng: &mut SeededRng, layers: Vec<LayerSpec>) -> Model {
    let template = Model::zeros([1, 12, 12], layers.clone()).unwrap();
    let params = template
        .params()
        .iter()
        .map(|p| {
            p.as_ref().map(|p| Params {
                weight: random_tensor(rng, p.weight.shape(), -0.5, 0.5),
                bias: random_tensor(rng, p.bias.shape(), -0.1, 0.1),
            })
        })
        .collect();
    Model::from_params([1, 12, 12], layers, params).unwrap()
}

/// Agreement rule for analytic vs. numeric derivatives.
pub fn gradients_agree(analytic: f64, numeric: f64) -> bool {
    relative_error(analytic, numeric) <= 1e-4
}

/// `|a − n| / max(|a|, |n|)`, and 0 when both are exactly zero (a unit behind
/// an inactive ReLU leaves the loss bit-identical).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub struct FdMismatch {
    pub what: String,
    pub analytic: f64,
    pub numeric: f64,
}

pub struct FdReport {
    pub mismatches: Vec<FdMismatch>,
    pub checked: usize,
    pub worst_relative: f64,
}

/// Central differences with step `h` over every parameter and every input
/// pixel, compared with [`gradients_agree`].
pub fn finite_difference_check(model: &Model, x: &Tensor, y: usize, h: f64) -> FdReport {
    let back = model.backward(x, y).unwrap();
    let loss_at = |m: &Model, x: &Tensor| m.loss(x, y).unwrap().value;
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut worst: f64 = 0.0;

    for (li, p) in model.params().iter().enumerate() {
        let Some(p) = p else { continue };
        let g = back.param_grads.layers[li].as_ref().unwrap();
        for (which, tensor, grad) in [("weight", &p.weight, &g.weight), ("bias", &p.bias, &g.bias)]
        {
            for idx in 0..tensor.len() {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let slot = m.params_mut()[li].as_mut().unwrap();
                    let target = if which == "weight" {
                        &mut slot.weight
                    } else {
                        &mut slot.bias
                    };
                    let mut data = target.data().to_vec();
                    data[idx] += delta;
                    *target = Tensor::new(tensor.shape(), data).unwrap();
                    loss_at(&m, x)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let analytic = grad.data()[idx];
                checked += 1;
                worst = worst.max(relative_error(analytic, numeric));
                if !gradients_agree(analytic, numeric) {
                    bad.push(FdMismatch {
                        what: format!("layer {li} {which}[{idx}]"),
                        analytic,
                        numeric,
                    });
                }
            }
        }
    }

    for idx in 0..x.len() {
        let eval = |delta: f64| {
            let mut data = x.data().to_vec();
            data[idx] += delta;
            loss_at(model, &Tensor::new(x.shape(), data).unwrap())
        };
        let numeric = (eval(h) - eval(-h)) / (2.0 * h);
        let analytic = back.input_grad.data()[idx];
        checked += 1;
        worst = worst.max(relative_error(analytic, numeric));
        if !gradients_agree(analytic, numeric) {
            bad.push(FdMismatch {
                what: format!("input[{idx}]"),
                analytic,
                numeric,
            });
        }
    }
    FdReport {
        mismatches: bad,
        checked,
        worst_relative: worst,
    }
}
