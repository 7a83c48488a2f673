//! Gradient-trained translation estimators.
//!
//! The network is a stack of single-output-channel layers whose filters are
//! sparse over a small patch around the origin. Training pushes the first
//! output component above the rest with softmax cross-entropy toward
//! index 0 and plain SGD.

mod config;
mod tape;

pub use config::{LossKind, TrainConfig};
pub use tape::{GradientTape, LayerGradient, NetGradient};

use crate::constructive::{check_aperiodic, ShiftScope};
use crate::error::{Error, Result};
use crate::net::{CircularFilter, ConstantBias, EquivariantLayer, EquivariantNetwork};
use crate::par;
use crate::restore::margin;
use crate::tensor::{delta, FlatIndex, MultiTensor, Shape, TranslationVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

fn check_output(output: &[f64]) -> Result<()> {
    if output.len() < 2 {
        return Err(Error::Input(format!(
            "loss needs at least 2 outputs, got {}",
            output.len()
        )));
    }
    if let Some(i) = output.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite output {} at index {i}",
            output[i]
        )));
    }
    Ok(())
}

fn log_sum_exp(output: &[f64]) -> f64 {
    let m = output.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + output.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy toward index 0: `-o[0] + log sum_i exp(o[i])`.
pub fn loss(output: &[f64]) -> Result<f64> {
    loss_at(output, 0)
}

/// Softmax cross-entropy toward `target`.
pub fn loss_at(output: &[f64], target: usize) -> Result<f64> {
    check_output(output)?;
    if target >= output.len() {
        return Err(Error::Range {
            index: target,
            len: output.len(),
        });
    }
    Ok(log_sum_exp(output) - output[target])
}

/// Loss and its gradient with respect to the outputs (`softmax - e_target`).
pub fn loss_gradient(output: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    let l = loss_at(output, target)?;
    let lse = log_sum_exp(output);
    let mut g: Vec<f64> = output.iter().map(|v| (v - lse).exp()).collect();
    g[target] -= 1.0;
    Ok((l, g))
}

fn require_single_output(net: &EquivariantNetwork) -> Result<()> {
    if net.out_channels() != 1 {
        return Err(Error::Shape(format!(
            "estimator must have one output channel, has {}",
            net.out_channels()
        )));
    }
    Ok(())
}

/// Loss toward index 0 and its gradient for every filter tap and bias.
pub fn grad(net: &EquivariantNetwork, x: &MultiTensor) -> Result<(f64, NetGradient)> {
    grad_at(net, x, 0)
}

pub fn grad_at(
    net: &EquivariantNetwork,
    x: &MultiTensor,
    target: usize,
) -> Result<(f64, NetGradient)> {
    require_single_output(net)?;
    let tape = GradientTape::record(net, x)?;
    let (l, g) = loss_gradient(tape.output().as_slice(), target)?;
    Ok((l, tape.backward(net, &g)?))
}

/// Flat offsets of the `side^d` patch centered at the origin, deduplicated
/// when the grid is smaller than the patch.
pub fn patch_offsets(shape: &Shape, side: usize) -> Vec<FlatIndex> {
    let lo = -((side as i64 - 1) / 2);
    let d = shape.arity();
    let mut seen = vec![false; shape.len()];
    let mut out = Vec::new();
    let total = side.pow(d as u32);
    for t in 0..total {
        let mut rem = t;
        let mut idx = vec![0i64; d];
        for slot in idx.iter_mut().rev() {
            *slot = lo + (rem % side) as i64;
            rem /= side;
        }
        let k = delta(&idx, shape).expect("arity matches").0;
        if !seen[k] {
            seen[k] = true;
            out.push(FlatIndex(k));
        }
    }
    out
}

/// Fresh network with fan-in uniform weights drawn from `rng`.
pub fn init_network(
    shape: &Shape,
    in_channels: usize,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<EquivariantNetwork> {
    config.validate()?;
    let offsets = patch_offsets(shape, config.kernel_side);
    let mut layers = Vec::with_capacity(config.depth);
    let mut cin = in_channels;
    for l in 0..config.depth {
        let last = l + 1 == config.depth;
        let cout = if last { 1 } else { config.channels };
        let bound = 1.0 / ((offsets.len() * cin) as f64).sqrt();
        let mut filters = Vec::with_capacity(cin * cout);
        for _ in 0..cin * cout {
            let taps = offsets
                .iter()
                .map(|&k| (k, rng.gen_range(-bound..=bound)))
                .collect();
            filters.push(CircularFilter::sparse(shape.clone(), taps)?);
        }
        let act = if last {
            config.output_activation
        } else {
            config.hidden_activation
        };
        layers.push(EquivariantLayer::new(
            cin,
            cout,
            filters,
            vec![ConstantBias(0.0); cout],
            act,
        )?);
        cin = cout;
    }
    EquivariantNetwork::new(shape.clone(), in_channels, layers)
}

/// `w -= lr * g`; biases stay fixed when `bias_free`.
pub fn sgd_step(net: &mut EquivariantNetwork, g: &NetGradient, lr: f64, bias_free: bool) {
    for (layer, lg) in net.layers_mut().iter_mut().zip(&g.layers) {
        let cin = layer.in_channels();
        for (fi, gf) in lg.filters.iter().enumerate() {
            let f = layer.filter_mut(fi / cin, fi % cin);
            for (w, d) in f.weights_mut().iter_mut().zip(gf) {
                *w -= lr * d;
            }
        }
        if !bias_free {
            for (b, d) in layer.biases_mut().iter_mut().zip(&lg.biases) {
                b.0 -= lr * d;
            }
        }
    }
}

fn trained_norm(g: &NetGradient, bias_free: bool) -> f64 {
    let mut sq = 0.0;
    for lg in &g.layers {
        sq += lg.filters.iter().flatten().map(|v| v * v).sum::<f64>();
        if !bias_free {
            sq += lg.biases.iter().map(|v| v * v).sum::<f64>();
        }
    }
    sq.sqrt()
}

/// Accuracy and margin statistics of an estimator on canonical poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorStats {
    /// Fraction of elements whose output has a strict maximum at index 0.
    /// Ties count as misses, so a network with constant output scores 0.
    pub accuracy: f64,
    pub min_margin: f64,
    pub mean_margin: f64,
    pub mean_loss: f64,
}

pub fn evaluate_estimator(
    net: &EquivariantNetwork,
    dataset: &[MultiTensor],
) -> Result<EstimatorStats> {
    if dataset.is_empty() {
        return Err(Error::Input(
            "accuracy of an empty dataset is undefined".into(),
        ));
    }
    require_single_output(net)?;
    let outs = net.forward_batch(dataset)?;
    let mut hits = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut sum_margin = 0.0;
    let mut losses = Vec::with_capacity(outs.len());
    for o in &outs {
        let o = o.as_slice();
        let m = margin(o);
        if m > 0.0 {
            hits += 1;
        }
        min_margin = min_margin.min(m);
        sum_margin += m;
        losses.push(if o.len() >= 2 { loss(o)? } else { 0.0 });
    }
    let s = dataset.len() as f64;
    Ok(EstimatorStats {
        accuracy: hits as f64 / s,
        min_margin,
        mean_margin: sum_margin / s,
        mean_loss: losses.iter().sum::<f64>() / s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean loss over the dataset after the epoch's updates.
    pub loss: f64,
    pub accuracy: f64,
    pub min_margin: f64,
}

pub const LOG_HEADER: &str = "epoch,loss,argmax0_accuracy,min_margin";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?}",
            self.epoch, self.loss, self.accuracy, self.min_margin
        )
    }
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for e in log {
        let _ = writeln!(s, "{}", e.csv_row());
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: EquivariantNetwork,
    pub log: Vec<EpochLog>,
    /// Non-fatal issues, such as a periodic dataset.
    pub warnings: Vec<String>,
}

pub fn train(dataset: &[MultiTensor], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, |_, _| {})
}

/// Trains an estimator, calling `on_epoch` after every epoch.
///
/// A non-finite loss aborts with a numeric error after the callback has
/// seen every completed epoch.
pub fn train_with(
    dataset: &[MultiTensor],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &EquivariantNetwork),
) -> Result<TrainOutcome> {
    config.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::Input("cannot train on an empty dataset".into()))?;
    let shape = first.shape().clone();
    let n = shape.len();
    if n < 2 {
        return Err(Error::Input("training needs at least 2 positions".into()));
    }
    let mut warnings = Vec::new();
    let cert = check_aperiodic(dataset, ShiftScope::Spatial)?;
    if let Err(Error::Precondition(msg)) = cert.require() {
        warnings.push(format!(
            "{msg}; a periodic element has several correct shifts, so argmax-at-0 cannot be guaranteed"
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = init_network(&shape, first.channels(), config, &mut rng)?;
    let batch = if config.batch_size == 0 {
        dataset.len()
    } else {
        config.batch_size.min(dataset.len())
    };
    let shifts = TranslationVector::all(&shape);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let jobs: Vec<(usize, usize)> = chunk
                .iter()
                .map(|&i| {
                    (
                        i,
                        if config.augment {
                            rng.gen_range(0..n)
                        } else {
                            0
                        },
                    )
                })
                .collect();
            let per_sample = par::map(&jobs, |&(i, t)| -> Result<Vec<f64>> {
                let x = if t == 0 {
                    dataset[i].clone()
                } else {
                    dataset[i].translate(&shifts[t])?
                };
                Ok(grad_at(&net, &x, t)?.1.flatten())
            });
            let parts = per_sample.into_iter().collect::<Result<Vec<_>>>()?;
            let sum = par::tree_sum(parts).expect("non-empty batch");
            let mut g = NetGradient::zeros_like(&net).unflatten_like(&sum);
            g.scale(1.0 / chunk.len() as f64);
            if config.clip_norm > 0.0 {
                let norm = trained_norm(&g, config.bias_free);
                if norm > config.clip_norm {
                    g.scale(config.clip_norm / norm);
                }
            }
            sgd_step(&mut net, &g, config.learning_rate, config.bias_free);
        }
        let stats = evaluate_estimator(&net, dataset);
        let stats = match stats {
            Ok(s) if s.mean_loss.is_finite() => s,
            Ok(_) | Err(Error::Numeric(_)) => {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch} (non-finite loss)"
                )))
            }
            Err(e) => return Err(e),
        };
        let entry = EpochLog {
            epoch,
            loss: stats.mean_loss,
            accuracy: stats.accuracy,
            min_margin: stats.min_margin,
        };
        on_epoch(&entry, &net);
        log.push(entry);
    }
    Ok(TrainOutcome {
        network: net,
        log,
        warnings,
    })
}
