//! Equivariant binary decomposition of integer-valued tensors.
//!
//! A scalar ReLU network of depth `2Q + 2` extracts the bits of
//! `x = x_0 + 2 x_1 + ... + 2^Q x_Q`, most significant first, using
//! `x_q = relu(1 - relu(2^q + sum_{j>q} 2^j x_j - x))`. Lifting it to
//! tensors uses only single-tap (origin) filters and constant biases, so the
//! lifted network is equivariant by construction.

use crate::error::{Error, Result};
use crate::net::{Activation, CircularFilter, ConstantBias, EquivariantLayer, EquivariantNetwork};
use crate::tensor::{MultiTensor, Shape};

/// Values lie in `[0, 2^(bits+1))`; `bits` is `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryDecompositionSpec {
    pub bits: u32,
    pub in_channels: usize,
}

impl BinaryDecompositionSpec {
    pub fn new(bits: u32, in_channels: usize) -> Result<Self> {
        if bits > 52 {
            return Err(Error::Capacity(format!(
                "Q = {bits} exceeds exact integer range of f64"
            )));
        }
        if in_channels == 0 {
            return Err(Error::Input("at least one input channel required".into()));
        }
        Ok(Self { bits, in_channels })
    }

    /// Bits per input value, `Q + 1`.
    pub fn planes(&self) -> usize {
        self.bits as usize + 1
    }

    /// Binary channel count `G = P (Q + 1)`.
    pub fn out_channels(&self) -> usize {
        self.in_channels * self.planes()
    }

    /// Exclusive upper bound `2^(Q+1)` on admissible values.
    pub fn value_bound(&self) -> u64 {
        1u64 << (self.bits + 1)
    }
}

/// Scalar layer `relu(w z + b)` with `w` stored row-major.
#[derive(Debug, Clone)]
struct ScalarLayer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl ScalarLayer {
    fn identity_prefix(rows: usize, cols: usize) -> Self {
        let mut w = vec![0.0; rows * cols];
        for i in 0..rows.min(cols) {
            w[i * cols + i] = 1.0;
        }
        Self {
            rows,
            cols,
            w,
            b: vec![0.0; rows],
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.w[i * self.cols + j] = v;
    }
}

fn pow2(e: u32) -> f64 {
    (1u64 << e) as f64
}

/// The `2Q + 2` scalar layers; output order is `(x_0, x_Q, ..., x_1)`.
fn scalar_layers(q_max: u32) -> Vec<ScalarLayer> {
    let mut layers = Vec::with_capacity(2 * q_max as usize + 2);
    // state after the pair for step q: (x, x_Q, ..., x_{Q-q}), size q + 2
    for q in 0..q_max {
        let size_in = q as usize + 1;
        let size_out = size_in + 1;
        let mut odd = ScalarLayer::identity_prefix(size_out, size_in);
        let last = size_out - 1;
        odd.set(last, 0, -1.0);
        for c in 1..size_in {
            // column c carries x_{Q-c+1}
            odd.set(last, c, pow2(q_max - c as u32 + 1));
        }
        odd.b[last] = pow2(q_max - q);
        layers.push(odd);

        let mut even = ScalarLayer::identity_prefix(size_out, size_out);
        even.set(last, last, -1.0);
        even.b[last] = 1.0;
        layers.push(even);
    }
    // final pair replaces x by x_0
    let k = q_max as usize + 1;
    let mut odd = ScalarLayer::identity_prefix(k, k);
    odd.set(0, 0, -1.0);
    for c in 1..k {
        odd.set(0, c, pow2(q_max - c as u32 + 1));
    }
    odd.b[0] = 1.0;
    layers.push(odd);

    let mut even = ScalarLayer::identity_prefix(k, k);
    even.set(0, 0, -1.0);
    even.b[0] = 1.0;
    layers.push(even);
    layers
}

/// Builds the lifted decomposition network for `shape`.
///
/// Channel `p * (Q + 1) + j` of the output is bit `j` (LSB first) of input
/// channel `p`.
pub fn build_binary_network(
    spec: BinaryDecompositionSpec,
    shape: &Shape,
) -> Result<EquivariantNetwork> {
    let mut scalar = scalar_layers(spec.bits);
    // reorder the last layer's rows from (x_0, x_Q, ..., x_1) to (x_0, ..., x_Q)
    let last = scalar.last_mut().expect("at least two layers");
    let planes = spec.planes();
    let native_row = |j: usize| if j == 0 { 0 } else { planes - j };
    let mut w = vec![0.0; last.w.len()];
    let mut b = vec![0.0; last.b.len()];
    for j in 0..planes {
        let src = native_row(j);
        w[j * last.cols..(j + 1) * last.cols]
            .copy_from_slice(&last.w[src * last.cols..(src + 1) * last.cols]);
        b[j] = last.b[src];
    }
    last.w = w;
    last.b = b;

    let p_count = spec.in_channels;
    let layers = scalar
        .iter()
        .map(|sl| lift(sl, p_count, shape))
        .collect::<Result<Vec<_>>>()?;
    EquivariantNetwork::new(shape.clone(), p_count, layers)
}

/// Applies a scalar layer independently to every pixel of every input
/// channel: block `(p K_l + k, r K_{l-1} + k')` is `diag(w[k, k'])` when
/// `p = r` and zero otherwise.
fn lift(sl: &ScalarLayer, p_count: usize, shape: &Shape) -> Result<EquivariantLayer> {
    let cin = sl.cols * p_count;
    let cout = sl.rows * p_count;
    let mut filters = Vec::with_capacity(cin * cout);
    let mut biases = Vec::with_capacity(cout);
    for p in 0..p_count {
        for k in 0..sl.rows {
            for r in 0..p_count {
                for kk in 0..sl.cols {
                    let w = sl.w[k * sl.cols + kk];
                    filters.push(if p == r && w != 0.0 {
                        CircularFilter::scaled_identity(shape.clone(), w)
                    } else {
                        CircularFilter::zero(shape.clone())
                    });
                }
            }
            // the per-block split b / K_{l-1} sums back to b for each output channel
            biases.push(ConstantBias(sl.b[k]));
        }
    }
    EquivariantLayer::new(cin, cout, filters, biases, Activation::Relu)
}

/// Reference bit split: channel `p (Q+1) + j` holds bit `j` of channel `p`.
///
/// Rejects values that are not integers in `[0, 2^(Q+1))`.
pub fn decompose_reference(spec: BinaryDecompositionSpec, x: &MultiTensor) -> Result<MultiTensor> {
    check_range(spec, x)?;
    let n = x.spatial_len();
    let planes = spec.planes();
    let mut data = vec![0.0; spec.out_channels() * n];
    for p in 0..x.channels() {
        for (i, &v) in x.channel(p).iter().enumerate() {
            let v = v as u64;
            for j in 0..planes {
                data[(p * planes + j) * n + i] = ((v >> j) & 1) as f64;
            }
        }
    }
    MultiTensor::new(x.shape().clone(), spec.out_channels(), data)
}

/// Errors unless every value is an integer in `[0, 2^(Q+1))` and the
/// channel count matches.
pub fn check_range(spec: BinaryDecompositionSpec, x: &MultiTensor) -> Result<()> {
    if x.channels() != spec.in_channels {
        return Err(Error::Shape(format!(
            "expected {} channels, got {}",
            spec.in_channels,
            x.channels()
        )));
    }
    let bound = spec.value_bound() as f64;
    if let Some((i, v)) = x
        .as_slice()
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= 0.0 && v < bound && v.fract() == 0.0))
    {
        return Err(Error::Input(format!(
            "value {v} at position {i} is not an integer in [0, {bound})"
        )));
    }
    Ok(())
}
