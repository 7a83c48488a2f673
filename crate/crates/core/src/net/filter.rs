use crate::error::{shape_err, Error, Result};
use crate::tensor::{CircularTensor, FlatIndex, Shape};

/// An `N x N` circular filter stored by its base row `W_0`.
///
/// Row `delta(M)` of the implied matrix is `T^M(W_0)`, so applying the filter
/// is circular cross-correlation:
/// `out[M] = sum_J W_0[J] * x[M + J]`.
///
/// The base is kept either dense (all `N` taps) or sparse (a list of flat
/// offsets). Both apply taps in the stored order, so the two forms give
/// identical results for the same filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularFilter {
    shape: Shape,
    /// `None` for a dense base, where tap `i` sits at flat offset `i`.
    offsets: Option<Vec<usize>>,
    weights: Vec<f64>,
}

impl CircularFilter {
    pub fn dense(base: CircularTensor) -> Self {
        let shape = base.shape().clone();
        Self {
            shape,
            offsets: None,
            weights: base.into_vec(),
        }
    }

    pub fn sparse(shape: Shape, taps: Vec<(FlatIndex, f64)>) -> Result<Self> {
        let n = shape.len();
        let mut offsets = Vec::with_capacity(taps.len());
        let mut weights = Vec::with_capacity(taps.len());
        for (k, w) in taps {
            if k.0 >= n {
                return Err(Error::Range { index: k.0, len: n });
            }
            offsets.push(k.0);
            weights.push(w);
        }
        Ok(Self {
            shape,
            offsets: Some(offsets),
            weights,
        })
    }

    /// Single tap at the origin: `w * x`.
    pub fn scaled_identity(shape: Shape, w: f64) -> Self {
        Self {
            shape,
            offsets: Some(vec![0]),
            weights: vec![w],
        }
    }

    /// The all-zero filter (empty sparse support).
    pub fn zero(shape: Shape) -> Self {
        Self {
            shape,
            offsets: Some(Vec::new()),
            weights: Vec::new(),
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn is_sparse(&self) -> bool {
        self.offsets.is_some()
    }

    /// Number of stored taps (`N` for a dense base).
    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    pub fn offset(&self, tap: usize) -> usize {
        match &self.offsets {
            Some(o) => o[tap],
            None => tap,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// `(flat offset, weight)` pairs in application order.
    pub fn taps(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.weights.len()).map(|i| (self.offset(i), self.weights[i]))
    }

    /// Dense base row `W_0`; repeated sparse offsets accumulate.
    pub fn base(&self) -> CircularTensor {
        let mut values = vec![0.0; self.shape.len()];
        for (k, w) in self.taps() {
            values[k] += w;
        }
        CircularTensor::new(self.shape.clone(), values).expect("length matches shape")
    }

    /// Same filter with a dense base.
    pub fn to_dense(&self) -> Self {
        Self::dense(self.base())
    }

    /// Same filter with only the nonzero taps kept.
    pub fn to_sparse(&self) -> Self {
        let base = self.base();
        let (offsets, weights) = base
            .vectorize()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(k, w)| (k, *w))
            .unzip();
        Self {
            shape: self.shape.clone(),
            offsets: Some(offsets),
            weights,
        }
    }

    /// Accumulates the correlation of `x` into `acc`.
    pub(crate) fn correlate_into(&self, x: &[f64], acc: &mut [f64], tables: &mut GatherCache) {
        for (k, w) in self.taps() {
            let table = tables.get(k);
            for (a, &j) in acc.iter_mut().zip(table) {
                *a += w * x[j];
            }
        }
    }
}

/// Circular cross-correlation of `x` with the filter's base row.
pub fn apply_filter(f: &CircularFilter, x: &CircularTensor) -> Result<CircularTensor> {
    if f.shape() != x.shape() {
        return shape_err(format!("filter shape {} vs input {}", f.shape(), x.shape()));
    }
    let mut acc = vec![0.0; x.shape().len()];
    let mut cache = GatherCache::new(x.shape());
    f.correlate_into(x.vectorize(), &mut acc, &mut cache);
    CircularTensor::new(x.shape().clone(), acc)
}

/// Lazily built gather tables keyed by flat tap offset.
pub(crate) struct GatherCache<'s> {
    shape: &'s Shape,
    tables: Vec<Option<Vec<usize>>>,
}

impl<'s> GatherCache<'s> {
    pub fn new(shape: &'s Shape) -> Self {
        Self {
            shape,
            tables: vec![None; shape.len()],
        }
    }

    /// `table[delta(M)] = delta(M + J)` for tap offset `J = delta^-1(k)`.
    pub fn get(&mut self, k: usize) -> &[usize] {
        let shape = self.shape;
        self.tables[k].get_or_insert_with(|| {
            let j: Vec<i64> = shape.unflat(k).into_iter().map(|v| v as i64).collect();
            shape.shifted_gather(&j)
        })
    }
}
