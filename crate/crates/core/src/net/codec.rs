//! Network file format (`EQN1`), little-endian:
//!
//! ```text
//! "EQN1" | depth L: u32
//! per layer: in: u32 | out: u32 | activation: u8
//!   per filter (k-major, then r): sparse: u8 | support: u32 |
//!       sparse: support x (offset: u32, weight: f64)
//!       dense:  support (= N) x weight: f64
//!   per output channel: bias: f64
//! ```
//!
//! The spatial shape is not stored; offsets are flat indices into the shape
//! the network was built for, which the reader must supply.

use super::{Activation, CircularFilter, ConstantBias, EquivariantLayer, EquivariantNetwork};
use crate::error::{Error, Result};
use crate::tensor::{CircularTensor, FlatIndex, Shape};
use crate::wire::{put_u32, Reader};
use std::path::Path;

pub const NETWORK_MAGIC: &[u8; 4] = b"EQN1";

pub fn encode(net: &EquivariantNetwork) -> Result<Vec<u8>> {
    let mut out = NETWORK_MAGIC.to_vec();
    put_u32(&mut out, net.depth(), "depth")?;
    for layer in net.layers() {
        put_u32(&mut out, layer.in_channels(), "in channels")?;
        put_u32(&mut out, layer.out_channels(), "out channels")?;
        out.push(layer.activation().tag());
        for f in layer.filters() {
            out.push(f.is_sparse() as u8);
            put_u32(&mut out, f.support_len(), "support size")?;
            if f.is_sparse() {
                for (k, w) in f.taps() {
                    put_u32(&mut out, k, "offset")?;
                    out.extend_from_slice(&w.to_le_bytes());
                }
            } else {
                for w in f.weights() {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
        for b in layer.biases() {
            out.extend_from_slice(&b.0.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a network for `shape`. A depth-0 network is read as the
/// single-channel identity.
pub fn decode(bytes: &[u8], shape: &Shape) -> Result<EquivariantNetwork> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != NETWORK_MAGIC {
        return Err(Error::Decode {
            offset: 0,
            message: "bad magic, expected EQN1".into(),
        });
    }
    let n = shape.len();
    let depth = r.u32("depth")? as usize;
    let mut layers = Vec::with_capacity(depth.min(1024));
    let mut first_in = 1;
    for li in 0..depth {
        let cin = r.u32("in channels")? as usize;
        let cout = r.u32("out channels")? as usize;
        if cin == 0 || cout == 0 {
            return r.fail(format!("layer {li} has a zero channel count"));
        }
        if li == 0 {
            first_in = cin;
        }
        let tag = r.u8("activation")?;
        let activation = match Activation::from_tag(tag) {
            Some(a) => a,
            None => return r.fail(format!("unknown activation tag {tag}")),
        };
        let count = cin
            .checked_mul(cout)
            .ok_or_else(|| Error::Capacity("filter count overflows".into()))?;
        let mut filters = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let sparse = match r.u8("sparse flag")? {
                0 => false,
                1 => true,
                other => return r.fail(format!("bad sparse flag {other}")),
            };
            let support = r.u32("support size")? as usize;
            if sparse {
                let mut taps = Vec::with_capacity(support.min(n));
                for _ in 0..support {
                    let k = r.u32("offset")? as usize;
                    if k >= n {
                        return r.fail(format!("offset {k} outside shape {shape}"));
                    }
                    taps.push((FlatIndex(k), r.f64("weight")?));
                }
                filters.push(CircularFilter::sparse(shape.clone(), taps)?);
            } else {
                if support != n {
                    return r.fail(format!("dense filter with {support} taps for N = {n}"));
                }
                let values = (0..n)
                    .map(|_| r.f64("weight"))
                    .collect::<Result<Vec<_>>>()?;
                filters.push(CircularFilter::dense(CircularTensor::new(
                    shape.clone(),
                    values,
                )?));
            }
        }
        let biases = (0..cout)
            .map(|_| r.f64("bias").map(ConstantBias))
            .collect::<Result<Vec<_>>>()?;
        layers.push(EquivariantLayer::new(
            cin, cout, filters, biases, activation,
        )?);
    }
    r.finish()?;
    EquivariantNetwork::new(shape.clone(), first_in, layers)
}

pub fn write_file(path: impl AsRef<Path>, net: &EquivariantNetwork) -> Result<()> {
    std::fs::write(path, encode(net)?)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>, shape: &Shape) -> Result<EquivariantNetwork> {
    decode(&std::fs::read(path)?, shape)
}
