//! Binary PGM (P5) grayscale images, 8-bit only.

use crate::error::{Error, Result};
use crate::tensor::{CircularTensor, Shape};
use std::path::Path;

fn fail<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Decode {
        offset,
        message: message.into(),
    })
}

struct Header<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return fail(start, format!("expected {what}"));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| fail(start, format!("{what} out of range")), Ok)
    }
}

/// Decodes a P5 image into a `height x width` tensor of raw pixel values.
pub fn decode_pgm(bytes: &[u8]) -> Result<CircularTensor> {
    match bytes.get(..2) {
        Some(b"P5") => {}
        Some(b"P2") => return fail(0, "ASCII PGM (P2) is not supported, expected P5"),
        _ => return fail(0, "bad magic, expected P5"),
    }
    let mut h = Header { buf: bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval_at = h.pos;
    let maxval = h.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return fail(
            maxval_at,
            format!("maxval {maxval} unsupported, need 1..=255"),
        );
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return fail(h.pos, "expected one whitespace byte after maxval"),
    }
    if width == 0 || height == 0 {
        return fail(h.pos, "zero image dimension");
    }
    let need = width.checked_mul(height).ok_or_else(|| Error::Decode {
        offset: h.pos,
        message: "image too large".into(),
    })?;
    let data = &bytes[h.pos..];
    if data.len() < need {
        return fail(
            bytes.len(),
            format!(
                "truncated pixel data: need {need} bytes, found {}",
                data.len()
            ),
        );
    }
    if data.len() > need {
        return fail(
            h.pos + need,
            format!("{} trailing bytes", data.len() - need),
        );
    }
    CircularTensor::new(
        Shape::new(&[height, width])?,
        data.iter().map(|&b| b as f64).collect(),
    )
}

/// Clamp to `[0, 255]`, then round half away from zero; NaN saves as 0.
pub fn to_pixel(v: f64) -> u8 {
    if v.is_nan() {
        0
    } else {
        v.clamp(0.0, 255.0).round() as u8
    }
}

pub fn encode_pgm(image: &CircularTensor) -> Result<Vec<u8>> {
    let &[height, width] = image.shape().dims() else {
        return Err(Error::Shape(format!(
            "PGM needs a 2-D tensor, got shape {}",
            image.shape()
        )));
    };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(image.vectorize().iter().map(|&v| to_pixel(v)));
    Ok(out)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<CircularTensor> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn save_pgm(image: &CircularTensor, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_pgm(image)?)?;
    Ok(())
}
