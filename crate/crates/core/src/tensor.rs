//! Dense row-major `f64` tensors and the seeded random source used for
//! weight initialisation, shuffling and synthetic data.
//!
//! Image tensors are laid out channel-first (`C×H×W`). Every constructor
//! rejects non-finite values, so any tensor in circulation is finite.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_finite(data: &[f64], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data, "Tensor::new")?;
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// Panics if `shape` has a zero extent or `value` is not finite.
    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(value.is_finite());
        let n: usize = shape.iter().product();
        assert!(n > 0 && !shape.is_empty(), "invalid shape {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Internal constructor for data already known to be finite and sized.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.is_empty() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    /// Elementwise sign with `sign(0) = 0`.
    pub fn sign(&self) -> Tensor {
        let data = self
            .data
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();
        Tensor::from_parts(self.shape.clone(), data)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::arg(format!(
                "clamp bounds out of order: [{lo}, {hi}]"
            )));
        }
        let data = self.data.iter().map(|&v| v.max(lo).min(hi)).collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        check_finite(&data, "Tensor::map")?;
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        check_finite(&data, op)?;
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Result<Tensor> {
        self.map(|v| v * k)
    }

    /// In-place `self += other`; used to accumulate gradients.
    pub(crate) fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "accumulate: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// L∞ distance between two tensors of equal shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "max_abs_diff: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    fn dims2(&self, op: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::shape(format!(
                "{op} needs a matrix, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor::from_parts(vec![c, r], out))
    }

    /// Matrix product of an `m×k` and a `k×n` tensor.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner extents differ: {:?} · {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        check_finite(&out, "matmul")?;
        Ok(Tensor::from_parts(vec![m, n], out))
    }
}

/// Deterministic random source. Identical seeds yield identical sequences
/// on every platform (ChaCha8 stream cipher).
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for the same seed, so that e.g. initialisation and
    /// shuffling do not consume each other's draws.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// One draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn normal(&mut self, mean: f64, stddev: f64) -> f64 {
        // Parameters are validated by callers; Normal::new only rejects
        // non-finite stddev.
        Normal::new(mean, stddev)
            .expect("validated normal parameters")
            .sample(&mut self.inner)
    }
}

pub fn rng_uniform(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Result<Tensor> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::arg(format!("uniform range [{lo}, {hi}) is empty")));
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        // Rounding in lo + (hi-lo)*u can land on hi for tiny ranges.
        let v = rng.uniform(lo, hi);
        data.push(if v >= hi { lo } else { v });
    }
    Tensor::new(shape, data)
}

pub fn rng_normal(rng: &mut SeededRng, shape: &[usize], mean: f64, stddev: f64) -> Result<Tensor> {
    if !stddev.is_finite() || !mean.is_finite() || stddev <= 0.0 {
        return Err(Error::arg(format!(
            "normal stddev must be positive, got {stddev}"
        )));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.normal(mean, stddev)).collect();
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                out[i * n + j] = acc;
            }
        }
        out
    }

    #[test]
    fn sign_examples() {
        let t = Tensor::new(&[3], vec![-0.5, 0.0, 2.0]).unwrap();
        assert_eq!(t.sign().data(), &[-1.0, 0.0, 1.0]);
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(z.sign(), z);
        let mut rng = SeededRng::new(1);
        let r = rng_normal(&mut rng, &[4, 4], 0.0, 1.0).unwrap();
        assert_eq!(r.sign().sign(), r.sign());
    }

    #[test]
    fn clamp_examples() {
        let t = Tensor::new(&[3], vec![-0.2, 0.5, 1.3]).unwrap();
        let c = t.clamp(0.0, 1.0).unwrap();
        assert_eq!(c.data(), &[0.0, 0.5, 1.0]);
        assert_eq!(c.clamp(0.0, 1.0).unwrap(), c);
        assert_eq!(t.clamp(-1e300, 1e300).unwrap(), t);
        assert!(matches!(t.clamp(1.0, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn matmul_by_hand() {
        let a = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[2, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[3.0, 7.0]);

        let eye = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::new(&[2, 3], vec![1.5, -2.0, 0.25, 7.0, 8.0, -9.0]).unwrap();
        assert_eq!(eye.matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
        assert!(matches!(
            Tensor::zeros(&[3]).matmul(&a),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = SeededRng::new(7);
        let a = rng_uniform(&mut rng, &[7, 5], -1.0, 1.0).unwrap();
        let b = rng_uniform(&mut rng, &[5, 3], -1.0, 1.0).unwrap();
        let got = a.matmul(&b).unwrap();
        assert_eq!(got.shape(), &[7, 3]);
        let want = naive_matmul(a.data(), b.data(), 7, 5, 3);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn transpose_twice_is_identity() {
        let mut rng = SeededRng::new(3);
        let a = rng_uniform(&mut rng, &[4, 6], -1.0, 1.0).unwrap();
        assert_eq!(a.transpose().unwrap().shape(), &[6, 4]);
        assert_eq!(a.transpose().unwrap().transpose().unwrap(), a);
    }

    #[test]
    fn rng_is_deterministic() {
        let a = rng_uniform(&mut SeededRng::new(42), &[64], 0.0, 1.0).unwrap();
        let b = rng_uniform(&mut SeededRng::new(42), &[64], 0.0, 1.0).unwrap();
        let c = rng_uniform(&mut SeededRng::new(43), &[64], 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let n1 = rng_normal(&mut SeededRng::new(5), &[32], 0.0, 2.0).unwrap();
        let n2 = rng_normal(&mut SeededRng::new(5), &[32], 0.0, 2.0).unwrap();
        assert_eq!(n1, n2);
    }

    #[test]
    fn uniform_mean_converges() {
        let t = rng_uniform(&mut SeededRng::new(11), &[100_000], 0.0, 1.0).unwrap();
        let mean = t.sum() / t.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!(t.min() >= 0.0 && t.max() < 1.0);
    }

    #[test]
    fn rng_rejects_bad_ranges() {
        let mut rng = SeededRng::new(0);
        assert!(rng_uniform(&mut rng, &[2], 1.0, 1.0).is_err());
        assert!(rng_normal(&mut rng, &[2], 0.0, 0.0).is_err());
        assert!(rng_normal(&mut rng, &[2], 0.0, -1.0).is_err());
    }

    #[test]
    fn streams_are_independent() {
        let a = rng_uniform(&mut SeededRng::with_stream(9, 1), &[8], 0.0, 1.0).unwrap();
        let b = rng_uniform(&mut SeededRng::with_stream(9, 2), &[8], 0.0, 1.0).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(Tensor::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(&[0], vec![]).is_err());
        assert!(matches!(
            Tensor::new(&[1], vec![f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn sign_is_bounded(values in proptest::collection::vec(-1e6f64..1e6, 1..64)) {
            let t = Tensor::new(&[values.len()], values).unwrap();
            for &s in t.sign().data() {
                proptest::prop_assert!(s == -1.0 || s == 0.0 || s == 1.0);
            }
        }

        #[test]
        fn matmul_agrees_with_oracle(m in 1usize..16, k in 1usize..16, n in 1usize..16, seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let a = rng_uniform(&mut rng, &[m, k], -2.0, 2.0).unwrap();
            let b = rng_uniform(&mut rng, &[k, n], -2.0, 2.0).unwrap();
            let got = a.matmul(&b).unwrap();
            let want = naive_matmul(a.data(), b.data(), m, k, n);
            for (g, w) in got.data().iter().zip(&want) {
                proptest::prop_assert!((g - w).abs() <= 1e-12);
            }
        }
    }
}
