//! Raw tensor file format (`EQT1`), little-endian:
//!
//! ```text
//! "EQT1" | arity d: u32 | n_1..n_d: u32 | channels P: u32 | dtype: u8 | payload
//! ```
//!
//! dtype 0 stores f64 values, dtype 1 stores u8 values. The payload holds
//! `P * N` values, channel-major then row-major.

use super::{MultiTensor, Shape};
use crate::error::{Error, Result};
use crate::wire::{put_u32, Reader};
use std::path::Path;

pub const TENSOR_MAGIC: &[u8; 4] = b"EQT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64 = 0,
    U8 = 1,
}

pub fn encode(t: &MultiTensor, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + t.as_slice().len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    put_u32(&mut out, t.shape().arity(), "arity")?;
    for &n in t.shape().dims() {
        put_u32(&mut out, n, "dimension")?;
    }
    put_u32(&mut out, t.channels(), "channel count")?;
    out.push(dtype as u8);
    match dtype {
        Dtype::F64 => {
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::U8 => {
            for (i, &v) in t.as_slice().iter().enumerate() {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::Input(format!(
                        "value {v} at position {i} is not representable as u8"
                    )));
                }
                out.push(v as u8);
            }
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(MultiTensor, Dtype)> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != TENSOR_MAGIC {
        return Err(Error::Decode {
            offset: 0,
            message: "bad magic, expected EQT1".into(),
        });
    }
    let arity = r.u32("arity")? as usize;
    if arity == 0 {
        return r.fail("arity 0");
    }
    let dims = (0..arity)
        .map(|_| r.u32("dimension").map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let shape = Shape::new(&dims).map_err(|e| Error::Decode {
        offset: r.offset(),
        message: e.to_string(),
    })?;
    let channels = r.u32("channel count")? as usize;
    if channels == 0 {
        return r.fail("channel count 0");
    }
    let count = channels
        .checked_mul(shape.len())
        .ok_or_else(|| Error::Capacity("tensor payload overflows".into()))?;
    let dtype = match r.u8("dtype")? {
        0 => Dtype::F64,
        1 => Dtype::U8,
        other => return r.fail(format!("unknown dtype tag {other}")),
    };
    let data = match dtype {
        Dtype::F64 => {
            let raw = r.take(count.saturating_mul(8), "payload")?;
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        Dtype::U8 => r
            .take(count, "payload")?
            .iter()
            .map(|&b| b as f64)
            .collect(),
    };
    r.finish()?;
    Ok((MultiTensor::new(shape, channels, data)?, dtype))
}

pub fn write_file(path: impl AsRef<Path>, t: &MultiTensor, dtype: Dtype) -> Result<()> {
    std::fs::write(path, encode(t, dtype)?)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<(MultiTensor, Dtype)> {
    decode(&std::fs::read(path)?)
}
