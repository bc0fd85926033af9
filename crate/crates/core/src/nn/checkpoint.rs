//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "ADVBCKPT"
//! version      u32      1
//! input shape  3 × u32  C, H, W
//! layer count  u32
//! layers       per layer: u8 tag, then for Conv2d/Dense two u32 (in, out)
//! parameters   per parameterised layer, in order:
//!              u64 weight count, f64 weights, u64 bias count, f64 biases
//! ```

use std::path::Path;

use super::model::{LayerSpec, Model, Params};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"ADVBCKPT";
const VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_POOL: u8 = 3;
const TAG_FLATTEN: u8 = 4;
const TAG_DENSE: u8 = 5;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in model.input_shape() {
        put_u32(&mut out, d);
    }
    put_u32(&mut out, model.layers().len());
    for layer in model.layers() {
        match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
            } => {
                out.push(TAG_CONV);
                put_u32(&mut out, in_channels);
                put_u32(&mut out, out_channels);
            }
            LayerSpec::Relu => out.push(TAG_RELU),
            LayerSpec::MaxPool => out.push(TAG_POOL),
            LayerSpec::Flatten => out.push(TAG_FLATTEN),
            LayerSpec::Dense { inputs, outputs } => {
                out.push(TAG_DENSE);
                put_u32(&mut out, inputs);
                put_u32(&mut out, outputs);
            }
        }
    }
    for p in model.params().iter().flatten() {
        for t in [&p.weight, &p.bias] {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Checkpoint("length overflows usize".into()))
    }

    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n = self.u64()?;
        let expected: usize = shape.iter().product();
        if n != expected {
            return Err(Error::Checkpoint(format!(
                "blob of {n} values where {expected} were expected"
            )));
        }
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("blob too large".into()))?,
        )?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Model> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint(
            "not a model checkpoint (bad magic)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_shape = [r.u32()?, r.u32()?, r.u32()?];
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        layers.push(match r.u8()? {
            TAG_CONV => LayerSpec::Conv2d {
                in_channels: r.u32()?,
                out_channels: r.u32()?,
            },
            TAG_RELU => LayerSpec::Relu,
            TAG_POOL => LayerSpec::MaxPool,
            TAG_FLATTEN => LayerSpec::Flatten,
            TAG_DENSE => LayerSpec::Dense {
                inputs: r.u32()?,
                outputs: r.u32()?,
            },
            t => return Err(Error::Checkpoint(format!("unknown layer tag {t}"))),
        });
    }
    // Shapes are validated before reading blobs so a corrupt header cannot
    // request huge allocations.
    let skeleton =
        Model::zeros(input_shape, layers.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut params = Vec::with_capacity(layers.len());
    for p in skeleton.params() {
        params.push(match p {
            Some(p) => Some(Params {
                weight: r.tensor(p.weight.shape())?,
                bias: r.tensor(p.bias.shape())?,
            }),
            None => None,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            buf.len() - r.pos
        )));
    }
    Model::from_params(input_shape, layers, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&buf)
}
