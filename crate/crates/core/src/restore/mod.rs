//! Estimate a shift with an equivariant estimator, undo it, and classify.
//!
//! For a translation estimator `F`, the argmax of `F(T^M x)` is `delta(M)`
//! whenever `x` is a dataset element, so translating the input back by the
//! decoded `M` recovers `x` exactly.

mod eval;
mod polar;

pub use eval::{eval_grid, AccuracyTable, Classifier, EvalGridConfig, NearestNeighbor};
pub use polar::{
    build_rotation_estimator, restore_rotation, rotate_image, rotate_image_bins, to_polar,
    PolarGridSpec, RadialMode,
};

use crate::error::{Error, Result};
use crate::net::EquivariantNetwork;
use crate::tensor::{delta_inverse, FlatIndex, MultiTensor, TranslationVector};

/// Margins below this mark an estimate as degenerate (e.g. a symmetric
/// input with no well-defined pose).
pub const DEGENERATE_MARGIN: f64 = 1e-6;

/// Index of the largest value; ties go to the smallest index and NaN never
/// wins over a number.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] || (v[best].is_nan() && !x.is_nan()) {
            best = i;
        }
    }
    best
}

/// `v[0] - max_{i>0} v[i]`; infinite for a single output.
pub fn margin(v: &[f64]) -> f64 {
    let rest = v[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v[0] - rest
}

/// Winner minus runner-up, i.e. the margin the estimator would report on
/// the restored input.
pub fn top_margin(v: &[f64]) -> f64 {
    let k = argmax(v);
    let rest = v
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    v[k] - rest
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Translation(TranslationVector),
    /// Index of the angular bin; the rotation is `bin * 360 / n` degrees.
    RotationBin(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorationResult {
    pub estimate: Estimate,
    pub restored: MultiTensor,
    pub raw_output: Vec<f64>,
    /// Winning output minus the runner-up.
    pub margin: f64,
    /// `margin < DEGENERATE_MARGIN`.
    pub degenerate: bool,
}

fn estimator_output(net: &EquivariantNetwork, x: &MultiTensor) -> Result<Vec<f64>> {
    if net.out_channels() != 1 {
        return Err(Error::Shape(format!(
            "estimator must have one output channel, has {}",
            net.out_channels()
        )));
    }
    Ok(net.forward(x)?.into_vec())
}

fn decode_shift(net: &EquivariantNetwork, out: &[f64]) -> Result<TranslationVector> {
    let k = argmax(out);
    let idx = delta_inverse(FlatIndex(k), net.shape())?;
    Ok(TranslationVector(
        idx.into_iter().map(|v| v as i64).collect(),
    ))
}

/// `delta_inverse(argmax F(x))`.
pub fn estimate_translation(
    net: &EquivariantNetwork,
    x: &MultiTensor,
) -> Result<TranslationVector> {
    let out = estimator_output(net, x)?;
    decode_shift(net, &out)
}

/// Estimates the shift of `x` and translates it back.
///
/// Total for any input of the right layout; callers decide what to do with
/// a small margin.
pub fn restore(net: &EquivariantNetwork, x: &MultiTensor) -> Result<RestorationResult> {
    let out = estimator_output(net, x)?;
    let m = decode_shift(net, &out)?;
    let restored = x.translate(&m.neg())?;
    let margin = top_margin(&out);
    Ok(RestorationResult {
        estimate: Estimate::Translation(m),
        restored,
        raw_output: out,
        margin,
        degenerate: !(margin >= DEGENERATE_MARGIN),
    })
}
