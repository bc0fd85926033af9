//! Forward and backward passes for the individual layer kinds.
//!
//! Convolution is computed as an im2col matrix product: the `C·5·5 × P`
//! patch matrix (one column per output position) is multiplied by the
//! `F × C·5·5` kernel matrix. The backward pass reuses the same patch matrix.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const KERNEL: usize = 5;
pub const POOL: usize = 2;

fn dims3(t: &Tensor, op: &str) -> Result<(usize, usize, usize)> {
    match t.shape()[..] {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(format!(
            "{op} expects C×H×W, got {:?}",
            t.shape()
        ))),
    }
}

/// Patch matrix of shape `(C·K·K) × (OH·OW)` for a valid stride-1 correlation.
pub(crate) fn im2col(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = dims3(input, "im2col")?;
    if h < KERNEL || w < KERNEL {
        return Err(Error::shape(format!(
            "input {h}×{w} is smaller than the {KERNEL}×{KERNEL} kernel"
        )));
    }
    let (oh, ow) = (h - KERNEL + 1, w - KERNEL + 1);
    let positions = oh * ow;
    let src = input.data();
    let mut col = vec![0.0; c * KERNEL * KERNEL * positions];
    for ch in 0..c {
        for ki in 0..KERNEL {
            for kj in 0..KERNEL {
                let row = (ch * KERNEL + ki) * KERNEL + kj;
                let dst = &mut col[row * positions..(row + 1) * positions];
                for oi in 0..oh {
                    let base = (ch * h + oi + ki) * w + kj;
                    dst[oi * ow..(oi + 1) * ow].copy_from_slice(&src[base..base + ow]);
                }
            }
        }
    }
    Ok(Tensor::from_parts(
        vec![c * KERNEL * KERNEL, positions],
        col,
    ))
}

/// Scatter-add of a patch-matrix gradient back onto the input grid.
fn col2im(dcol: &Tensor, c: usize, h: usize, w: usize) -> Tensor {
    let (oh, ow) = (h - KERNEL + 1, w - KERNEL + 1);
    let positions = oh * ow;
    let src = dcol.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for ki in 0..KERNEL {
            for kj in 0..KERNEL {
                let row = (ch * KERNEL + ki) * KERNEL + kj;
                let from = &src[row * positions..(row + 1) * positions];
                for oi in 0..oh {
                    let base = (ch * h + oi + ki) * w + kj;
                    for (o, &g) in out[base..base + ow]
                        .iter_mut()
                        .zip(&from[oi * ow..(oi + 1) * ow])
                    {
                        *o += g;
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![c, h, w], out)
}

fn check_conv_params(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
) -> Result<(usize, usize, usize, usize)> {
    let (c, h, w) = dims3(input, "conv2d")?;
    let f = match kernels.shape()[..] {
        [f, kc, KERNEL, KERNEL] if kc == c => f,
        _ => {
            return Err(Error::shape(format!(
                "kernels {:?} do not fit input {:?}",
                kernels.shape(),
                input.shape()
            )))
        }
    };
    if bias.shape() != [f] {
        return Err(Error::shape(format!(
            "bias {:?} for {f} filters",
            bias.shape()
        )));
    }
    Ok((f, c, h, w))
}

pub(crate) fn conv2d_forward_with_patches(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (f, c, h, w) = check_conv_params(input, kernels, bias)?;
    let col = im2col(input)?;
    let weights = kernels.reshape(&[f, c * KERNEL * KERNEL])?;
    let mut out = weights.matmul(&col)?;
    let positions = (h - KERNEL + 1) * (w - KERNEL + 1);
    for (fi, &b) in bias.data().iter().enumerate() {
        for v in &mut out.data_mut()[fi * positions..(fi + 1) * positions] {
            *v += b;
        }
    }
    let out = out.reshape(&[f, h - KERNEL + 1, w - KERNEL + 1])?;
    Ok((out, col))
}

/// Valid, stride-1 cross-correlation of a `C×H×W` input with `F×C×5×5`
/// kernels plus a per-filter bias.
pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    conv2d_forward_with_patches(input, kernels, bias).map(|(out, _)| out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub(crate) fn conv2d_backward_with_patches(
    input_shape: &[usize],
    patches: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let (c, h, w) = match input_shape[..] {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::shape("conv2d backward needs a C×H×W input shape")),
    };
    let f = kernels.shape()[0];
    let (oh, ow) = (h - KERNEL + 1, w - KERNEL + 1);
    if grad_out.shape() != [f, oh, ow] {
        return Err(Error::shape(format!(
            "conv2d grad {:?}, expected {:?}",
            grad_out.shape(),
            [f, oh, ow]
        )));
    }
    let g = grad_out.reshape(&[f, oh * ow])?;
    let bias: Vec<f64> = g
        .data()
        .chunks(oh * ow)
        .map(|row| row.iter().sum())
        .collect();
    let grad_kernels = g.matmul(&patches.transpose()?)?.reshape(kernels.shape())?;
    let weights_t = kernels.reshape(&[f, c * KERNEL * KERNEL])?.transpose()?;
    let dcol = weights_t.matmul(&g)?;
    Ok(ConvGrads {
        input: col2im(&dcol, c, h, w),
        kernels: grad_kernels,
        bias: Tensor::new(&[f], bias)?,
    })
}

/// Gradients of a convolution with respect to its input, kernels and bias,
/// given the upstream gradient `grad_out` of shape `F×(H−4)×(W−4)`.
pub fn conv2d_backward(input: &Tensor, kernels: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
    let f = kernels.shape().first().copied().unwrap_or(0);
    check_conv_params(input, kernels, &Tensor::zeros(&[f.max(1)]))?;
    let patches = im2col(input)?;
    conv2d_backward_with_patches(input.shape(), &patches, kernels, grad_out)
}

/// Disjoint 2×2 max pooling. Returns the pooled tensor and, for every output
/// element, the flat index of the input element it was taken from. Ties go
/// to the row-major earliest position.
pub fn maxpool_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = dims3(input, "maxpool")?;
    if h % POOL != 0 || w % POOL != 0 {
        return Err(Error::shape(format!(
            "max pool needs even extents, got {h}×{w}"
        )));
    }
    let (oh, ow) = (h / POOL, w / POOL);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best = (ch * h + oi * POOL) * w + oj * POOL;
                for di in 0..POOL {
                    for dj in 0..POOL {
                        let idx = (ch * h + oi * POOL + di) * w + oj * POOL + dj;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                }
                out.push(src[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_parts(vec![c, oh, ow], out), argmax))
}

/// Routes each output gradient to the input position recorded in `argmax`.
pub fn maxpool_backward(
    grad_out: &Tensor,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(
            "max pool gradient does not match recorded argmax",
        ));
    }
    let n: usize = input_shape.iter().product();
    let mut grad = vec![0.0; n];
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        if idx >= n {
            return Err(Error::shape("argmax index outside input"));
        }
        grad[idx] += g;
    }
    Tensor::new(input_shape, grad)
}

pub fn relu_forward(t: &Tensor) -> Tensor {
    Tensor::from_parts(
        t.shape().to_vec(),
        t.data().iter().map(|&v| v.max(0.0)).collect(),
    )
}

/// The gradient passes where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape("relu gradient shape mismatch"));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}

/// `W·x + b` for a vector `x` of length `in`, `W` of shape `out×in`.
pub fn fc_forward(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (out, inputs) = match weights.shape()[..] {
        [o, i] => (o, i),
        _ => return Err(Error::shape("fully connected weights must be a matrix")),
    };
    if x.shape() != [inputs] || bias.shape() != [out] {
        return Err(Error::shape(format!(
            "fully connected {out}×{inputs}: input {:?}, bias {:?}",
            x.shape(),
            bias.shape()
        )));
    }
    let y = weights.matmul(&x.reshape(&[inputs, 1])?)?.reshape(&[out])?;
    y.add(bias)
}

#[derive(Debug, Clone)]
pub struct FcGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn fc_backward(x: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<FcGrads> {
    let (out, inputs) = match weights.shape()[..] {
        [o, i] => (o, i),
        _ => return Err(Error::shape("fully connected weights must be a matrix")),
    };
    if x.shape() != [inputs] || grad_out.shape() != [out] {
        return Err(Error::shape("fully connected gradient shape mismatch"));
    }
    let g = grad_out.reshape(&[out, 1])?;
    Ok(FcGrads {
        weights: g.matmul(&x.reshape(&[1, inputs])?)?,
        input: weights.transpose()?.matmul(&g)?.reshape(&[inputs])?,
        bias: grad_out.clone(),
    })
}
