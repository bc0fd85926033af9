//! Binary PGM (P5) reading and writing, 8-bit samples only.

use std::path::Path;

use crate::error::{Error, PgmError, Result};
use crate::tensor::Tensor;

/// Raw 8-bit grayscale raster as stored in a P5 file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u8,
    pub pixels: Vec<u8>,
}

fn skip_whitespace_and_comments(buf: &[u8], pos: &mut usize) {
    loop {
        while *pos < buf.len() && buf[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < buf.len() && buf[*pos] == b'#' {
            while *pos < buf.len() && buf[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            return;
        }
    }
}

fn header_number(buf: &[u8], pos: &mut usize, what: &str) -> std::result::Result<u32, PgmError> {
    skip_whitespace_and_comments(buf, pos);
    let start = *pos;
    while *pos < buf.len() && buf[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(PgmError::Header(format!("missing {what}")));
    }
    std::str::from_utf8(&buf[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PgmError::Header(format!("{what} out of range")))
}

impl PgmImage {
    pub fn decode(buf: &[u8]) -> std::result::Result<Self, PgmError> {
        if buf.len() < 2 || &buf[..2] != b"P5" {
            let magic = String::from_utf8_lossy(&buf[..buf.len().min(2)]).into_owned();
            return Err(PgmError::BadMagic(magic));
        }
        let mut pos = 2;
        if pos < buf.len() && !buf[pos].is_ascii_whitespace() && buf[pos] != b'#' {
            return Err(PgmError::BadMagic(
                String::from_utf8_lossy(&buf[..3]).into_owned(),
            ));
        }
        let width = header_number(buf, &mut pos, "width")? as usize;
        let height = header_number(buf, &mut pos, "height")? as usize;
        let maxval = header_number(buf, &mut pos, "maxval")?;
        if width == 0 || height == 0 {
            return Err(PgmError::Header(format!("empty raster {width}×{height}")));
        }
        if maxval == 0 {
            return Err(PgmError::Header("maxval must be positive".into()));
        }
        if maxval > 255 {
            return Err(PgmError::MaxvalTooLarge(maxval));
        }
        // Exactly one whitespace byte separates the header from the raster.
        match buf.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(PgmError::Header("no separator after maxval".into())),
        }
        let expected = width * height;
        let data = &buf[pos..];
        if data.len() < expected {
            return Err(PgmError::Truncated {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u8,
            pixels: data[..expected].to_vec(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Samples scaled by `1 / maxval` into a `1×H×W` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let m = self.maxval as f64;
        let data = self.pixels.iter().map(|&p| p as f64 / m).collect();
        Tensor::from_parts(vec![1, self.height, self.width], data)
    }

    /// Quantises a `1×H×W` (or `H×W`) tensor with values in `[0, 1]`.
    pub fn from_tensor(t: &Tensor, maxval: u8) -> Result<Self> {
        let (height, width) = match t.shape()[..] {
            [1, h, w] | [h, w] => (h, w),
            _ => return Err(Error::shape(format!("cannot store {:?} as PGM", t.shape()))),
        };
        if maxval == 0 {
            return Err(Error::arg("maxval must be positive"));
        }
        let m = maxval as f64;
        let pixels = t
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * m).round() as u8)
            .collect();
        Ok(Self {
            width,
            height,
            maxval,
            pixels,
        })
    }
}

pub fn load_pgm(path: &Path) -> Result<Tensor> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    PgmImage::decode(&buf)
        .map(|img| img.to_tensor())
        .map_err(|source| Error::Pgm {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_pgm(path: &Path, img: &Tensor, maxval: u8) -> Result<()> {
    let encoded = PgmImage::from_tensor(img, maxval)?.encode();
    std::fs::write(path, encoded).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(header: &str, pixels: &[u8]) -> Vec<u8> {
        let mut b = header.as_bytes().to_vec();
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn scales_by_maxval() {
        let img = PgmImage::decode(&raw("P5\n2 2\n255\n", &[0, 255, 128, 64])).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);

        let img = PgmImage::decode(&raw("P5 1 1 7\n", &[7])).unwrap();
        assert_eq!(img.to_tensor().data(), &[1.0]);
    }

    #[test]
    fn tolerates_comment_after_magic() {
        let img = PgmImage::decode(&raw("P5\n# made by hand\n3 1\n255\n", &[1, 2, 3])).unwrap();
        assert_eq!((img.width, img.height), (3, 1));
        assert_eq!(img.pixels, vec![1, 2, 3]);
    }

    #[test]
    fn distinct_parse_errors() {
        assert!(matches!(
            PgmImage::decode(&raw("P2\n1 1\n255\n", b"0")),
            Err(PgmError::BadMagic(_))
        ));
        assert!(matches!(
            PgmImage::decode(&raw("P5\n2 2\n255\n", &[1, 2, 3])),
            Err(PgmError::Truncated {
                expected: 4,
                found: 3
            })
        ));
        assert!(matches!(
            PgmImage::decode(&raw("P5\n1 1\n65535\n", &[0, 0])),
            Err(PgmError::MaxvalTooLarge(65535))
        ));
        assert!(matches!(
            PgmImage::decode(&raw("P5\n1\n", &[])),
            Err(PgmError::Header(_))
        ));
        assert!(matches!(PgmImage::decode(b""), Err(PgmError::BadMagic(_))));
    }

    #[test]
    fn load_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P2\n1 1\n1\n1").unwrap();
        let err = load_pgm(&path).unwrap_err();
        assert!(err.to_string().contains("bad.pgm"));
        assert!(matches!(
            load_pgm(&dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn load_save_round_trip(w in 1usize..12, h in 1usize..12, maxval in 1u8..=255, seed in 0u64..1000) {
            let mut rng = crate::tensor::SeededRng::new(seed);
            let pixels: Vec<u8> = (0..w * h).map(|_| rng.int_inclusive(0, maxval as usize) as u8).collect();
            let img = PgmImage { width: w, height: h, maxval, pixels };
            let t = PgmImage::decode(&img.encode()).unwrap().to_tensor();
            proptest::prop_assert_eq!(PgmImage::from_tensor(&t, maxval).unwrap(), img);
        }
    }
}
