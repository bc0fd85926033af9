use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source coordinate of output index `i` when corners are aligned.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        0.0
    } else {
        i as f64 * ((src - 1) as f64 / (dst - 1) as f64)
    }
}

/// Bilinear resize of a `C×H×W` image with corner-aligned sampling: output
/// corners coincide with input corners.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = match img.shape()[..] {
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::shape(format!(
                "resize expects C×H×W, got {:?}",
                img.shape()
            )))
        }
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::arg(format!("cannot resize to {out_h}×{out_w}")));
    }
    let (lo, hi) = (img.min(), img.max());
    let src = img.data();
    let cols: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|j| {
            let x = source_coord(j, w, out_w);
            let x0 = (x.floor() as usize).min(w - 1);
            ((x0), (x0 + 1).min(w - 1), x - x0 as f64)
        })
        .collect();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for i in 0..out_h {
            let y = source_coord(i, h, out_h);
            let y0 = (y.floor() as usize).min(h - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fy = y - y0 as f64;
            for &(x0, x1, fx) in &cols {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(v.clamp(lo, hi));
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{rng_uniform, SeededRng};

    #[test]
    fn same_size_is_identity() {
        let img = rng_uniform(&mut SeededRng::new(1), &[1, 7, 5], 0.0, 1.0).unwrap();
        assert_eq!(resize_bilinear(&img, 7, 5).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Tensor::full(&[1, 4, 6], 0.37);
        for (h, w) in [(1, 1), (3, 9), (17, 2), (64, 64)] {
            let r = resize_bilinear(&img, h, w).unwrap();
            assert!(r.data().iter().all(|&v| v == 0.37));
        }
    }

    #[test]
    fn upscale_two_by_two_by_hand() {
        let (a, b, c, d) = (0.0, 0.4, 0.8, 1.0);
        let img = Tensor::new(&[1, 2, 2], vec![a, b, c, d]).unwrap();
        let r = resize_bilinear(&img, 3, 3).unwrap();
        let want = [
            a,
            (a + b) / 2.0,
            b,
            (a + c) / 2.0,
            (a + b + c + d) / 4.0,
            (b + d) / 2.0,
            c,
            (c + d) / 2.0,
            d,
        ];
        for (g, w) in r.data().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn output_stays_in_input_range() {
        let img = rng_uniform(&mut SeededRng::new(2), &[1, 9, 13], 0.2, 0.6).unwrap();
        let r = resize_bilinear(&img, 31, 4).unwrap();
        assert!(r.min() >= img.min() && r.max() <= img.max());
    }

    #[test]
    fn rejects_zero_extent() {
        assert!(matches!(
            resize_bilinear(&Tensor::zeros(&[1, 2, 2]), 0, 3),
            Err(Error::Argument(_))
        ));
    }
}
