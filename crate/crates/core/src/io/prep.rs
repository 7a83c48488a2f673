//! Dataset preparation: nearest-neighbor resize and constant padding.

use crate::error::{Error, Result};
use crate::tensor::{CircularTensor, Shape};

fn dims2(image: &CircularTensor) -> Result<(usize, usize)> {
    match image.shape().dims() {
        &[h, w] => Ok((h, w)),
        _ => Err(Error::Shape(format!(
            "expected a 2-D image, got {}",
            image.shape()
        ))),
    }
}

/// Output pixel `(r, c)` copies source pixel
/// `(floor((r + 0.5) H / h), floor((c + 0.5) W / w))`.
pub fn resize_nearest(
    image: &CircularTensor,
    height: usize,
    width: usize,
) -> Result<CircularTensor> {
    let (h, w) = dims2(image)?;
    let shape = Shape::new(&[height, width])?;
    let v = image.vectorize();
    let src = |i: usize, from: usize, to: usize| ((2 * i + 1) * from / (2 * to)).min(from - 1);
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        let sr = src(r, h, height);
        for c in 0..width {
            out.push(v[sr * w + src(c, w, width)]);
        }
    }
    CircularTensor::new(shape, out)
}

/// Adds `pad` pixels of `value` on every side.
pub fn pad_constant(image: &CircularTensor, pad: usize, value: f64) -> Result<CircularTensor> {
    let (h, w) = dims2(image)?;
    let (nh, nw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![value; nh * nw];
    for (r, row) in image.vectorize().chunks(w).enumerate() {
        let start = (r + pad) * nw + pad;
        out[start..start + w].copy_from_slice(row);
    }
    CircularTensor::new(Shape::new(&[nh, nw])?, out)
}
