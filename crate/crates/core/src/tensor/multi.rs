use super::{dot, gather, CircularTensor, Shape, TranslationVector};
use crate::error::{shape_err, Result};

/// `P` circular tensors of one spatial shape, stored channel-major.
///
/// Spatial translations act on every channel alike; the channel axis is
/// circular too, but is only shifted explicitly (see [`Self::shift_channels`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTensor {
    shape: Shape,
    channels: usize,
    data: Vec<f64>,
}

impl MultiTensor {
    pub fn new(shape: Shape, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return shape_err("channel count must be at least 1");
        }
        if data.len() != channels * shape.len() {
            return shape_err(format!(
                "{} values supplied for {channels} channels of shape {shape}",
                data.len()
            ));
        }
        Ok(Self {
            shape,
            channels,
            data,
        })
    }

    pub fn zeros(shape: Shape, channels: usize) -> Self {
        let data = vec![0.0; channels * shape.len()];
        Self {
            shape,
            channels,
            data,
        }
    }

    pub fn from_channels(parts: Vec<CircularTensor>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return shape_err("no channels supplied");
        };
        let shape = first.shape().clone();
        let mut data = Vec::with_capacity(parts.len() * shape.len());
        for p in &parts {
            if p.shape() != &shape {
                return shape_err(format!("channel shapes {} and {} differ", shape, p.shape()));
            }
            data.extend_from_slice(p.vectorize());
        }
        Ok(Self {
            shape,
            channels: parts.len(),
            data,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Spatial size `N` of one channel.
    pub fn spatial_len(&self) -> usize {
        self.shape.len()
    }

    pub fn channel(&self, r: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[r * n..(r + 1) * n]
    }

    pub fn channel_tensor(&self, r: usize) -> CircularTensor {
        CircularTensor {
            shape: self.shape.clone(),
            values: self.channel(r).to_vec(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Spatial translation applied to every channel.
    pub fn translate(&self, m: &TranslationVector) -> Result<Self> {
        self.shape.check_arity(m.arity())?;
        let table = self.shape.shifted_gather(&m.neg().0);
        Ok(self.gather_spatial(&table))
    }

    pub(crate) fn gather_spatial(&self, table: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.channels {
            data.extend(gather(self.channel(r), table));
        }
        Self {
            shape: self.shape.clone(),
            channels: self.channels,
            data,
        }
    }

    /// Circular shift along the channel axis: output channel `r` is input
    /// channel `r - c`.
    pub fn shift_channels(&self, c: i64) -> Self {
        let p = self.channels as i64;
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..p {
            data.extend_from_slice(self.channel((r - c).rem_euclid(p) as usize));
        }
        Self {
            shape: self.shape.clone(),
            channels: self.channels,
            data,
        }
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape || self.channels != other.channels {
            return shape_err(format!(
                "inner product of {}x{} and {}x{}",
                self.channels, self.shape, other.channels, other.shape
            ));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape || self.channels != other.channels {
            return shape_err("comparing tensors of different layout");
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl From<CircularTensor> for MultiTensor {
    fn from(t: CircularTensor) -> Self {
        Self {
            shape: t.shape,
            channels: 1,
            data: t.values,
        }
    }
}
