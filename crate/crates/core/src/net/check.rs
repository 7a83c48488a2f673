//! Equivariance checks and dense-matrix oracles.
//!
//! [`DenseAffineLayer`] holds an arbitrary `W X + C` with full `N x N`
//! blocks and a full bias tensor. It serves two purposes: an independent
//! matrix-multiply route for checking the gather-based layers, and a way to
//! build maps that break circularity or bias constancy on purpose.

use super::{Activation, CircularFilter, EquivariantLayer, EquivariantNetwork};
use crate::error::{shape_err, Error, Result};
use crate::par;
use crate::tensor::{MultiTensor, Shape, TranslationVector};

/// Largest `N` for which a full matrix may be materialized.
pub const MAX_MATERIALIZE: usize = 4096;

/// Anything that maps multi-channel tensors of one shape to another.
pub trait TensorMap: Sync {
    fn map(&self, x: &MultiTensor) -> Result<MultiTensor>;
}

impl TensorMap for EquivariantLayer {
    fn map(&self, x: &MultiTensor) -> Result<MultiTensor> {
        self.apply(x)
    }
}

impl TensorMap for EquivariantNetwork {
    fn map(&self, x: &MultiTensor) -> Result<MultiTensor> {
        self.forward(x)
    }
}

/// Full `N x N` matrix of a circular filter, row-major.
///
/// Row `delta(M)` is `vectorize(T^M(W_0))`.
pub fn materialize_matrix(f: &CircularFilter) -> Result<Vec<f64>> {
    let shape = f.shape();
    let n = shape.len();
    if n > MAX_MATERIALIZE {
        return Err(Error::Capacity(format!(
            "refusing to materialize a {n}x{n} matrix (limit N <= {MAX_MATERIALIZE})"
        )));
    }
    let base = f.base();
    let mut out = Vec::with_capacity(n * n);
    for m in TranslationVector::all(shape) {
        out.extend_from_slice(base.translate(&m)?.vectorize());
    }
    Ok(out)
}

/// General affine layer `sigma(W X + C)` with unconstrained blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAffineLayer {
    shape: Shape,
    in_channels: usize,
    out_channels: usize,
    /// Block `(k, r)` at index `k * in_channels + r`, each `N x N` row-major.
    blocks: Vec<Vec<f64>>,
    /// One length-`N` bias tensor per output channel.
    bias: Vec<Vec<f64>>,
    activation: Activation,
}

impl DenseAffineLayer {
    pub fn from_layer(layer: &EquivariantLayer) -> Result<Self> {
        let n = layer.shape().len();
        let blocks = layer
            .filters()
            .iter()
            .map(materialize_matrix)
            .collect::<Result<Vec<_>>>()?;
        let bias = layer.biases().iter().map(|b| vec![b.0; n]).collect();
        Ok(Self {
            shape: layer.shape().clone(),
            in_channels: layer.in_channels(),
            out_channels: layer.out_channels(),
            blocks,
            bias,
            activation: layer.activation(),
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// Adds `delta` to bias entry `i` of output channel `k`.
    pub fn perturb_bias(&mut self, k: usize, i: usize, delta: f64) {
        self.bias[k][i] += delta;
    }

    /// Adds `delta` to entry `(row, col)` of block `(k, r)`.
    pub fn perturb_weight(&mut self, k: usize, r: usize, row: usize, col: usize, delta: f64) {
        let n = self.shape.len();
        self.blocks[k * self.in_channels + r][row * n + col] += delta;
    }

    pub fn apply(&self, x: &MultiTensor) -> Result<MultiTensor> {
        if x.shape() != &self.shape || x.channels() != self.in_channels {
            return shape_err("dense layer input layout mismatch");
        }
        let n = self.shape.len();
        let mut out = Vec::with_capacity(self.out_channels * n);
        for k in 0..self.out_channels {
            for i in 0..n {
                let mut acc = 0.0;
                for r in 0..self.in_channels {
                    let row = &self.blocks[k * self.in_channels + r][i * n..(i + 1) * n];
                    acc += row
                        .iter()
                        .zip(x.channel(r))
                        .map(|(w, v)| w * v)
                        .sum::<f64>();
                }
                out.push(self.activation.apply(acc + self.bias[k][i]));
            }
        }
        MultiTensor::new(self.shape.clone(), self.out_channels, out)
    }
}

impl TensorMap for DenseAffineLayer {
    fn map(&self, x: &MultiTensor) -> Result<MultiTensor> {
        self.apply(x)
    }
}

/// Composition of dense affine layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    pub layers: Vec<DenseAffineLayer>,
}

impl DenseNetwork {
    pub fn from_network(net: &EquivariantNetwork) -> Result<Self> {
        Ok(Self {
            layers: net
                .layers()
                .iter()
                .map(DenseAffineLayer::from_layer)
                .collect::<Result<_>>()?,
        })
    }
}

impl TensorMap for DenseNetwork {
    fn map(&self, x: &MultiTensor) -> Result<MultiTensor> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.apply(&cur)?;
        }
        Ok(cur)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivarianceReport {
    pub max_deviation: f64,
    pub within_tolerance: bool,
}

/// `max |F(T^M X) - T^M F(X)|` for a single translation.
pub fn check_equivariance<F: TensorMap + ?Sized>(
    map: &F,
    x: &MultiTensor,
    m: &TranslationVector,
    tol: f64,
) -> Result<EquivarianceReport> {
    let base = map.map(x)?;
    let dev = deviation_at(map, x, &base, m)?;
    Ok(EquivarianceReport {
        max_deviation: dev,
        within_tolerance: dev <= tol,
    })
}

fn deviation_at<F: TensorMap + ?Sized>(
    map: &F,
    x: &MultiTensor,
    base: &MultiTensor,
    m: &TranslationVector,
) -> Result<f64> {
    let lhs = map.map(&x.translate(m)?)?;
    let rhs = base.translate(m)?;
    lhs.max_abs_diff(&rhs)
}

/// Largest deviation over `shifts`, with the shift that attains it
/// (the earliest one on ties).
pub fn max_equivariance_deviation<F: TensorMap + ?Sized>(
    map: &F,
    x: &MultiTensor,
    shifts: &[TranslationVector],
) -> Result<(f64, TranslationVector)> {
    let base = map.map(x)?;
    let devs = par::map(shifts, |m| deviation_at(map, x, &base, m));
    let mut best = (0.0, TranslationVector::zero(x.shape().arity()));
    for (d, m) in devs.into_iter().zip(shifts) {
        let d = d?;
        if d > best.0 || d.is_nan() {
            best = (d, m.clone());
        }
    }
    Ok(best)
}

/// Exhaustive search over every grid translation for one whose deviation
/// exceeds `threshold`. Returns the worst such shift.
pub fn find_equivariance_violation<F: TensorMap + ?Sized>(
    map: &F,
    x: &MultiTensor,
    threshold: f64,
) -> Result<Option<(TranslationVector, f64)>> {
    let shifts = TranslationVector::all(x.shape());
    let (dev, m) = max_equivariance_deviation(map, x, &shifts)?;
    Ok((dev > threshold).then_some((m, dev)))
}
