//! Strictly translation-equivariant layers and networks.
//!
//! A layer is `F(X) = sigma(W X + C)` where every `W^{k,r}` block is a
//! [`CircularFilter`] and every bias is a single constant per output channel.
//! That structure is exactly what makes an affine map commute with all
//! circular translations, so the types below cannot represent anything
//! else. The general (possibly non-equivariant) affine maps used to exercise
//! the converse live in [`check`].

pub mod check;
pub mod codec;
mod filter;

pub use check::{
    check_equivariance, find_equivariance_violation, materialize_matrix,
    max_equivariance_deviation, DenseAffineLayer, DenseNetwork, EquivarianceReport, TensorMap,
};
pub use filter::{apply_filter, CircularFilter};

pub(crate) use filter::GatherCache;

use crate::error::{shape_err, Result};
use crate::par;
use crate::tensor::{MultiTensor, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative at `v`; ReLU uses 0 at the kink.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Per-output-channel bias; as a tensor it is `value * 1`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstantBias(pub f64);

/// One layer of the canonical architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivariantLayer {
    shape: Shape,
    in_channels: usize,
    out_channels: usize,
    /// Row-major over `(k, r)`: filter `k * in_channels + r`.
    filters: Vec<CircularFilter>,
    biases: Vec<ConstantBias>,
    activation: Activation,
}

impl EquivariantLayer {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        filters: Vec<CircularFilter>,
        biases: Vec<ConstantBias>,
        activation: Activation,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return shape_err("layer channel counts must be positive");
        }
        if filters.len() != in_channels * out_channels {
            return shape_err(format!(
                "{} filters for {out_channels}x{in_channels} layer",
                filters.len()
            ));
        }
        if biases.len() != out_channels {
            return shape_err(format!(
                "{} biases for {out_channels} outputs",
                biases.len()
            ));
        }
        let shape = filters[0].shape().clone();
        if let Some(f) = filters.iter().find(|f| f.shape() != &shape) {
            return shape_err(format!("filter shapes {} and {} differ", shape, f.shape()));
        }
        Ok(Self {
            shape,
            in_channels,
            out_channels,
            filters,
            biases,
            activation,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn filter(&self, k: usize, r: usize) -> &CircularFilter {
        &self.filters[k * self.in_channels + r]
    }

    pub fn filter_mut(&mut self, k: usize, r: usize) -> &mut CircularFilter {
        &mut self.filters[k * self.in_channels + r]
    }

    pub fn filters(&self) -> &[CircularFilter] {
        &self.filters
    }

    pub fn bias(&self, k: usize) -> ConstantBias {
        self.biases[k]
    }

    pub fn biases(&self) -> &[ConstantBias] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [ConstantBias] {
        &mut self.biases
    }

    fn check_input(&self, x: &MultiTensor) -> Result<()> {
        if x.shape() != &self.shape {
            return shape_err(format!("layer shape {} vs input {}", self.shape, x.shape()));
        }
        if x.channels() != self.in_channels {
            return shape_err(format!(
                "layer expects {} channels, got {}",
                self.in_channels,
                x.channels()
            ));
        }
        Ok(())
    }

    /// `W X + C`, before the activation.
    pub fn pre_activation(&self, x: &MultiTensor) -> Result<MultiTensor> {
        self.check_input(x)?;
        let n = self.shape.len();
        let mut cache = GatherCache::new(&self.shape);
        let mut out = vec![0.0; self.out_channels * n];
        for (k, acc) in out.chunks_exact_mut(n).enumerate() {
            for r in 0..self.in_channels {
                self.filter(k, r)
                    .correlate_into(x.channel(r), acc, &mut cache);
            }
            let b = self.biases[k].0;
            for a in acc.iter_mut() {
                *a += b;
            }
        }
        MultiTensor::new(self.shape.clone(), self.out_channels, out)
    }

    pub fn apply(&self, x: &MultiTensor) -> Result<MultiTensor> {
        let z = self.pre_activation(x)?;
        let act = self.activation;
        let data = z.as_slice().iter().map(|&v| act.apply(v)).collect();
        MultiTensor::new(self.shape.clone(), self.out_channels, data)
    }
}

/// Free-function form of [`EquivariantLayer::apply`].
pub fn apply_layer(layer: &EquivariantLayer, x: &MultiTensor) -> Result<MultiTensor> {
    layer.apply(x)
}

/// Composition `F_L o ... o F_1` over one spatial shape.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivariantNetwork {
    shape: Shape,
    in_channels: usize,
    layers: Vec<EquivariantLayer>,
}

impl EquivariantNetwork {
    pub fn new(shape: Shape, in_channels: usize, layers: Vec<EquivariantLayer>) -> Result<Self> {
        let mut ch = in_channels;
        for (i, l) in layers.iter().enumerate() {
            if l.shape() != &shape {
                return shape_err(format!(
                    "layer {i} has shape {}, network {shape}",
                    l.shape()
                ));
            }
            if l.in_channels() != ch {
                return shape_err(format!(
                    "layer {i} expects {} channels but receives {ch}",
                    l.in_channels()
                ));
            }
            ch = l.out_channels();
        }
        Ok(Self {
            shape,
            in_channels,
            layers,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers
            .last()
            .map_or(self.in_channels, |l| l.out_channels())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Largest channel count over the input and every layer output.
    pub fn max_channels(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_channels())
            .fold(self.in_channels, usize::max)
    }

    /// Width in the `n_l * N` sense: largest number of scalar units per layer.
    pub fn width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_channels())
            .max()
            .unwrap_or(self.in_channels)
            * self.shape.len()
    }

    pub fn layers(&self) -> &[EquivariantLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [EquivariantLayer] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<EquivariantLayer> {
        self.layers
    }

    pub fn forward(&self, x: &MultiTensor) -> Result<MultiTensor> {
        if x.shape() != &self.shape || x.channels() != self.in_channels {
            return shape_err(format!(
                "network takes {}x{}, got {}x{}",
                self.in_channels,
                self.shape,
                x.channels(),
                x.shape()
            ));
        }
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.apply(&cur)?;
        }
        Ok(cur)
    }

    /// Forward pass over a batch; order of results matches `xs`.
    pub fn forward_batch(&self, xs: &[MultiTensor]) -> Result<Vec<MultiTensor>> {
        par::map(xs, |x| self.forward(x)).into_iter().collect()
    }

    /// `self` followed by `next` (`next o self`).
    pub fn then(self, next: EquivariantNetwork) -> Result<Self> {
        if next.shape != self.shape || next.in_channels != self.out_channels() {
            return shape_err(format!(
                "cannot stack a {}-channel network on {} output channels",
                next.in_channels,
                self.out_channels()
            ));
        }
        let mut layers = self.layers;
        layers.extend(next.layers);
        Self::new(self.shape, self.in_channels, layers)
    }
}

/// Free-function form of [`EquivariantNetwork::forward`].
pub fn forward(net: &EquivariantNetwork, x: &MultiTensor) -> Result<MultiTensor> {
    net.forward(x)
}
