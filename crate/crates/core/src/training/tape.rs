//! Reverse-mode differentiation of an equivariant network.
//!
//! The forward pass records each layer's input and pre-activation; the
//! backward pass walks the layers in reverse, turning output adjoints into
//! adjoints for every filter tap, every bias, and the layer input.

use crate::error::{Error, Result};
use crate::net::{EquivariantNetwork, GatherCache};
use crate::tensor::MultiTensor;

/// Forward-pass record for one input.
#[derive(Debug, Clone)]
pub struct GradientTape {
    inputs: Vec<MultiTensor>,
    pre: Vec<MultiTensor>,
    output: MultiTensor,
}

/// Gradient with the same layout as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradient {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    /// One vector per filter, aligned with that filter's stored taps.
    pub filters: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl NetGradient {
    pub fn zeros_like(net: &EquivariantNetwork) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    filters: l
                        .filters()
                        .iter()
                        .map(|f| vec![0.0; f.support_len()])
                        .collect(),
                    biases: vec![0.0; l.out_channels()],
                })
                .collect(),
        }
    }

    /// All entries flattened in layer, filter, tap order, then biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            for f in &l.filters {
                out.extend_from_slice(f);
            }
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            for f in &mut l.filters {
                f.iter_mut().for_each(|v| *v *= c);
            }
            l.biases.iter_mut().for_each(|v| *v *= c);
        }
    }

    /// Rebuilds a gradient from [`Self::flatten`] output.
    pub fn unflatten_like(&self, flat: &[f64]) -> Self {
        let mut it = flat.iter().copied();
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGradient {
                    filters: l
                        .filters
                        .iter()
                        .map(|f| it.by_ref().take(f.len()).collect())
                        .collect(),
                    biases: it.by_ref().take(l.biases.len()).collect(),
                })
                .collect(),
        }
    }
}

impl GradientTape {
    pub fn record(net: &EquivariantNetwork, x: &MultiTensor) -> Result<Self> {
        let mut inputs = Vec::with_capacity(net.depth());
        let mut pre = Vec::with_capacity(net.depth());
        if x.shape() != net.shape() || x.channels() != net.in_channels() {
            return Err(Error::Shape(format!(
                "network takes {}x{}, got {}x{}",
                net.in_channels(),
                net.shape(),
                x.channels(),
                x.shape()
            )));
        }
        let mut cur = x.clone();
        for layer in net.layers() {
            let z = layer.pre_activation(&cur)?;
            let act = layer.activation();
            let a = MultiTensor::new(
                z.shape().clone(),
                z.channels(),
                z.as_slice().iter().map(|&v| act.apply(v)).collect(),
            )?;
            inputs.push(std::mem::replace(&mut cur, a));
            pre.push(z);
        }
        Ok(Self {
            inputs,
            pre,
            output: cur,
        })
    }

    pub fn output(&self) -> &MultiTensor {
        &self.output
    }

    /// Propagates `grad_output` (same layout as the output) back through
    /// the recorded pass.
    pub fn backward(&self, net: &EquivariantNetwork, grad_output: &[f64]) -> Result<NetGradient> {
        if grad_output.len() != self.output.as_slice().len() {
            return Err(Error::Shape("output gradient length mismatch".into()));
        }
        let mut grad = NetGradient::zeros_like(net);
        let mut g_out = grad_output.to_vec();
        let shape = net.shape();
        let n = shape.len();
        let mut cache = GatherCache::new(shape);
        for (li, layer) in net.layers().iter().enumerate().rev() {
            let x = &self.inputs[li];
            let z = &self.pre[li];
            let act = layer.activation();
            let g_pre: Vec<f64> = g_out
                .iter()
                .zip(z.as_slice())
                .map(|(g, &v)| g * act.derivative(v))
                .collect();
            let mut g_in = vec![0.0; layer.in_channels() * n];
            let lg = &mut grad.layers[li];
            for k in 0..layer.out_channels() {
                let gk = &g_pre[k * n..(k + 1) * n];
                lg.biases[k] = gk.iter().sum();
                for r in 0..layer.in_channels() {
                    let f = layer.filter(k, r);
                    let xr = x.channel(r);
                    let gw = &mut lg.filters[k * layer.in_channels() + r];
                    let gir = &mut g_in[r * n..(r + 1) * n];
                    for (tap, (off, w)) in f.taps().enumerate() {
                        let table = cache.get(off);
                        let mut acc = 0.0;
                        for (m, &j) in table.iter().enumerate() {
                            acc += gk[m] * xr[j];
                            gir[j] += w * gk[m];
                        }
                        gw[tap] = acc;
                    }
                }
            }
            for (fi, gf) in lg.filters.iter().enumerate() {
                if let Some(t) = gf.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient at layer {li}, filter {fi}, tap offset {}",
                        layer.filters()[fi].offset(t)
                    )));
                }
            }
            g_out = g_in;
        }
        Ok(grad)
    }
}
