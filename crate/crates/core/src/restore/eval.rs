use super::restore;
use crate::error::{Error, Result};
use crate::net::EquivariantNetwork;
use crate::par;
use crate::tensor::{MultiTensor, TranslationVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

pub trait Classifier: Sync {
    fn classify(&self, x: &MultiTensor) -> Result<String>;
}

/// Labels an input with the label of the stored element it has the largest
/// inner product with; ties go to the earliest element.
#[derive(Debug, Clone)]
pub struct NearestNeighbor {
    elements: Vec<MultiTensor>,
    labels: Vec<String>,
}

impl NearestNeighbor {
    pub fn new(elements: Vec<MultiTensor>, labels: Vec<String>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Input(
                "nearest-neighbor classifier needs a non-empty set".into(),
            ));
        }
        if elements.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} elements but {} labels",
                elements.len(),
                labels.len()
            )));
        }
        Ok(Self { elements, labels })
    }

    /// Index of the matching stored element.
    pub fn nearest(&self, x: &MultiTensor) -> Result<usize> {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, e) in self.elements.iter().enumerate() {
            let s = e.inner(x)?;
            if s > best_score {
                best = i;
                best_score = s;
            }
        }
        Ok(best)
    }
}

impl Classifier for NearestNeighbor {
    fn classify(&self, x: &MultiTensor) -> Result<String> {
        Ok(self.labels[self.nearest(x)?].clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalGridConfig {
    /// Largest shift scope `s`; every scope in `0..=s` gets a column.
    pub max_shift: usize,
    /// Random shifts drawn per element and scope.
    pub trials_per_element: usize,
    pub seed: u64,
}

impl Default for EvalGridConfig {
    fn default() -> Self {
        Self {
            max_shift: 8,
            trials_per_element: 10,
            seed: 0,
        }
    }
}

/// Classification accuracy with and without the restorer, per shift scope.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub scopes: Vec<usize>,
    /// Fractions in `[0, 1]`.
    pub without: Vec<f64>,
    pub with: Vec<f64>,
}

impl AccuracyTable {
    pub fn effect(&self) -> Vec<f64> {
        self.with
            .iter()
            .zip(&self.without)
            .map(|(w, o)| w - o)
            .collect()
    }

    /// Header of scopes, then rows `wo`, `w`, `effect` in percent.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scope");
        for sc in &self.scopes {
            let _ = write!(s, ",{sc}");
        }
        s.push('\n');
        for (name, row) in [
            ("wo", self.without.clone()),
            ("w", self.with.clone()),
            ("effect", self.effect()),
        ] {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{:.2}", 100.0 * v);
            }
            s.push('\n');
        }
        s
    }
}

/// Each shift component is drawn uniformly from `[-s, s]` for scope `s`;
/// shifts wrap around.
pub fn eval_grid(
    net: &EquivariantNetwork,
    classifier: &dyn Classifier,
    dataset: &[MultiTensor],
    labels: &[String],
    config: &EvalGridConfig,
) -> Result<AccuracyTable> {
    if dataset.is_empty() || dataset.len() != labels.len() {
        return Err(Error::Input(format!(
            "eval needs a non-empty dataset with one label per element ({} elements, {} labels)",
            dataset.len(),
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let arity = net.shape().arity();
    let mut table = AccuracyTable {
        scopes: (0..=config.max_shift).collect(),
        without: Vec::new(),
        with: Vec::new(),
    };
    for &scope in &table.scopes {
        let s = scope as i64;
        let mut jobs = Vec::with_capacity(dataset.len() * config.trials_per_element);
        for i in 0..dataset.len() {
            for _ in 0..config.trials_per_element {
                let m: Vec<i64> = (0..arity).map(|_| rng.gen_range(-s..=s)).collect();
                jobs.push((i, TranslationVector(m)));
            }
        }
        let results = par::map(&jobs, |(i, m)| -> Result<(bool, bool)> {
            let shifted = dataset[*i].translate(m)?;
            let plain = classifier.classify(&shifted)? == labels[*i];
            let restored = restore(net, &shifted)?.restored;
            let fixed = classifier.classify(&restored)? == labels[*i];
            Ok((plain, fixed))
        });
        let mut hits = (0usize, 0usize);
        for r in results {
            let (a, b) = r?;
            hits.0 += a as usize;
            hits.1 += b as usize;
        }
        let total = jobs.len().max(1) as f64;
        table.without.push(hits.0 as f64 / total);
        table.with.push(hits.1 as f64 / total);
    }
    Ok(table)
}
