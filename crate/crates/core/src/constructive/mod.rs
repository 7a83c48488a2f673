//! Training-free translation restorers.
//!
//! [`build_restorer`] stacks two equivariant networks:
//!
//! 1. the binary decomposition network ([`build_binary_network`]), which
//!    maps integer data in `[0, 2^(Q+1))` to `G = P (Q + 1)` binary channels;
//! 2. a two-layer estimator head ([`build_estimator_head`]) whose first-layer
//!    filters are the normalized binary data tensors, scaled by powers of
//!    `alpha = 1 + GN + 2 G^2 N^2` in order of increasing norm, and whose
//!    second layer averages the `S` channels.
//!
//! For every element of an aperiodic dataset the composed network's output
//! has its strict maximum at index 0, so the argmax of a shifted element's
//! output is the flat index of the shift.

mod aperiodic;
mod bits;

pub use aperiodic::{
    check_aperiodic, dataset_digest, AperiodicityCertificate, ShiftScope, Verdict, Witness,
};
pub use bits::{build_binary_network, check_range, decompose_reference, BinaryDecompositionSpec};

use crate::error::{shape_err, Error, Result};
use crate::net::{Activation, CircularFilter, ConstantBias, EquivariantLayer, EquivariantNetwork};
use crate::tensor::{FlatIndex, MultiTensor};

/// The two-layer head for a binary dataset.
#[derive(Debug, Clone)]
pub struct EstimatorHead {
    pub network: EquivariantNetwork,
    /// `order[s]` is the dataset index placed at (0-based) rank `s`,
    /// ascending by norm; ties keep dataset order.
    pub order: Vec<usize>,
    pub alpha: f64,
}

/// Smallest admissible scale: `1 + GN + 2 G^2 N^2`.
pub fn alpha_for(g: usize, n: usize) -> f64 {
    let gn = (g * n) as f64;
    1.0 + gn + 2.0 * gn * gn
}

/// `log2(S (2GN + 1) alpha^(S-1))`; must stay below 1024 for f64.
pub fn capacity_log2(s: usize, g: usize, n: usize) -> f64 {
    let gn = (g * n) as f64;
    (s as f64).log2() + (2.0 * gn + 1.0).log2() + (s as f64 - 1.0) * alpha_for(g, n).log2()
}

/// Builds the two-layer estimator for a binary, spatially aperiodic dataset.
pub fn build_estimator_head(binary: &[MultiTensor]) -> Result<EstimatorHead> {
    let first = binary
        .first()
        .ok_or_else(|| Error::Input("estimator head needs at least one element".into()))?;
    let shape = first.shape().clone();
    let g = first.channels();
    let n = shape.len();
    for (i, z) in binary.iter().enumerate() {
        if z.shape() != &shape || z.channels() != g {
            return shape_err(format!("element {i} layout differs from element 0"));
        }
        if let Some(v) = z.as_slice().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Precondition(format!(
                "element {i} is not binary (contains {v})"
            )));
        }
    }
    let s_count = binary.len();
    let cap = capacity_log2(s_count, g, n);
    if cap >= 1024.0 {
        return Err(Error::Capacity(format!(
            "S (2GN+1) alpha^(S-1) = 2^{cap:.1} overflows f64 \
             (alpha^(S-1) = 2^{:.1}, S = {s_count}, G = {g}, N = {n})",
            (s_count as f64 - 1.0) * alpha_for(g, n).log2()
        )));
    }

    check_aperiodic(binary, ShiftScope::Spatial)?.require()?;

    let ones: Vec<usize> = binary
        .iter()
        .map(|z| z.as_slice().iter().filter(|&&v| v == 1.0).count())
        .collect();
    let mut order: Vec<usize> = (0..s_count).collect();
    order.sort_by_key(|&i| ones[i]);

    let alpha = alpha_for(g, n);
    let gn1 = 2.0 * (g * n) as f64 + 1.0;
    let mut filters = Vec::with_capacity(s_count * g);
    let mut biases = Vec::with_capacity(s_count);
    let mut prev_norm = 1.0 / gn1;
    for (rank, &idx) in order.iter().enumerate() {
        let z = &binary[idx];
        let norm = (ones[idx] as f64).sqrt();
        let scale = alpha.powi(rank as i32);
        let w = scale / norm;
        for r in 0..g {
            let taps = z
                .channel(r)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(k, _)| (FlatIndex(k), w))
                .collect();
            filters.push(CircularFilter::sparse(shape.clone(), taps)?);
        }
        // sum over r of alpha^(s-1) / (G (2GN+1)) - alpha^(s-1) ||Z_{s-1}|| / G
        biases.push(ConstantBias(scale / gn1 - scale * prev_norm));
        prev_norm = norm;
    }
    let layer1 = EquivariantLayer::new(g, s_count, filters, biases, Activation::Relu)?;
    let inv_s = 1.0 / s_count as f64;
    let layer2 = EquivariantLayer::new(
        s_count,
        1,
        (0..s_count)
            .map(|_| CircularFilter::scaled_identity(shape.clone(), inv_s))
            .collect(),
        vec![ConstantBias(0.0)],
        Activation::Relu,
    )?;
    Ok(EstimatorHead {
        network: EquivariantNetwork::new(shape, g, vec![layer1, layer2])?,
        order,
        alpha,
    })
}

/// Decomposition network stacked with the estimator head.
#[derive(Debug, Clone)]
pub struct ConstructiveEstimator {
    pub spec: BinaryDecompositionSpec,
    pub certificate: AperiodicityCertificate,
    pub decomposition: EquivariantNetwork,
    pub head: EstimatorHead,
    pub network: EquivariantNetwork,
}

impl ConstructiveEstimator {
    pub fn alpha(&self) -> f64 {
        self.head.alpha
    }

    pub fn depth(&self) -> usize {
        self.network.depth()
    }

    pub fn width(&self) -> usize {
        self.network.width()
    }

    /// Checks the depth and width bounds of the construction:
    /// depth at most `2Q + 4`, and at most `max(S, (Q+1) P)` channels per
    /// layer (`max(SN, (Q+1)N)` units per input channel when `P = 1`).
    pub fn check_bounds(&self, dataset_len: usize) -> Result<()> {
        let q = self.spec.bits as usize;
        if self.depth() > 2 * q + 4 {
            return Err(Error::Precondition(format!(
                "depth {} exceeds 2Q+4 = {}",
                self.depth(),
                2 * q + 4
            )));
        }
        let n = self.network.shape().len();
        let limit = dataset_len.max((q + 1) * self.spec.in_channels) * n;
        if self.width() > limit {
            return Err(Error::Precondition(format!(
                "width {} exceeds {limit}",
                self.width()
            )));
        }
        Ok(())
    }
}

/// Builds a restorer for an integer-valued aperiodic dataset.
pub fn build_restorer(dataset: &[MultiTensor], bits: u32) -> Result<ConstructiveEstimator> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Input("cannot build a restorer for an empty dataset".into()))?;
    let spec = BinaryDecompositionSpec::new(bits, first.channels())?;
    for (i, x) in dataset.iter().enumerate() {
        check_range(spec, x).map_err(|e| Error::Input(format!("element {i}: {e}")))?;
    }
    let certificate = check_aperiodic(dataset, ShiftScope::SpatialAndChannel)?;
    certificate.require()?;
    let decomposition = build_binary_network(spec, first.shape())?;
    let binary = decomposition.forward_batch(dataset)?;
    let head = build_estimator_head(&binary)?;
    let network = decomposition.clone().then(head.network.clone())?;
    Ok(ConstructiveEstimator {
        spec,
        certificate,
        decomposition,
        head,
        network,
    })
}
