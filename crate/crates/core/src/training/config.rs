use crate::error::{Error, Result};
use crate::net::Activation;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy toward output index 0.
    SoftmaxCrossEntropy,
}

/// Hyperparameters of the trained estimator.
///
/// Stored on disk as flat `key = value` lines (see [`TrainConfig::parse`]).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of layers `L`.
    pub depth: usize,
    /// Channels of every hidden layer; the last layer always has one.
    pub channels: usize,
    /// Side of the contiguous filter patch centered at the origin; a 2-D
    /// network with side 3 has 9 taps per filter.
    pub kernel_side: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Samples per SGD step; 0 means the whole dataset.
    pub batch_size: usize,
    /// Rescale each step's gradient to at most this L2 norm over the
    /// trained parameters; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub bias_free: bool,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    /// Present each sample at a random translation with the target moved
    /// along with it.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            channels: 1,
            kernel_side: 3,
            learning_rate: 1e-2,
            epochs: 20_000,
            batch_size: 1,
            clip_norm: 2.0,
            seed: 0,
            loss: LossKind::SoftmaxCrossEntropy,
            bias_free: true,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Identity,
            augment: false,
        }
    }
}

fn parse_activation(v: &str) -> Option<Activation> {
    match v {
        "relu" => Some(Activation::Relu),
        "identity" => Some(Activation::Identity),
        _ => None,
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.channels == 0 {
            return Err(Error::Config("channels must be at least 1".into()));
        }
        if self.kernel_side == 0 {
            return Err(Error::Config("kernel_side must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return Err(Error::Config(format!(
                "clip_norm must be >= 0, got {}",
                self.clip_norm
            )));
        }
        Ok(())
    }

    /// Taps per filter for a `d`-dimensional grid.
    pub fn support_len(&self, arity: usize) -> usize {
        self.kernel_side.pow(arity as u32)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || {
                Error::Config(format!(
                    "line {}: bad value {value:?} for {key}",
                    lineno + 1
                ))
            };
            match key {
                "depth" => cfg.depth = value.parse().map_err(|_| bad())?,
                "channels" => cfg.channels = value.parse().map_err(|_| bad())?,
                "kernel_side" => cfg.kernel_side = value.parse().map_err(|_| bad())?,
                "learning_rate" => cfg.learning_rate = value.parse().map_err(|_| bad())?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad())?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad())?,
                "clip_norm" => cfg.clip_norm = value.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                "loss" => {
                    cfg.loss = match value {
                        "softmax_ce" => LossKind::SoftmaxCrossEntropy,
                        _ => return Err(bad()),
                    }
                }
                "bias_free" => cfg.bias_free = value.parse().map_err(|_| bad())?,
                "hidden_activation" => {
                    cfg.hidden_activation = parse_activation(value).ok_or_else(bad)?
                }
                "output_activation" => {
                    cfg.output_activation = parse_activation(value).ok_or_else(bad)?
                }
                "augment" => cfg.augment = value.parse().map_err(|_| bad())?,
                _ => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {key:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "depth = {}", self.depth);
        let _ = writeln!(s, "channels = {}", self.channels);
        let _ = writeln!(s, "kernel_side = {}", self.kernel_side);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "clip_norm = {:?}", self.clip_norm);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "loss = softmax_ce");
        let _ = writeln!(s, "bias_free = {}", self.bias_free);
        let _ = writeln!(
            s,
            "hidden_activation = {}",
            activation_name(self.hidden_activation)
        );
        let _ = writeln!(
            s,
            "output_activation = {}",
            activation_name(self.output_activation)
        );
        let _ = writeln!(s, "augment = {}", self.augment);
        s
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
