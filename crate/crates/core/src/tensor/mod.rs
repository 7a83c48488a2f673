//! Circular (toroidal) tensors.
//!
//! Every index is reduced modulo the shape, so a tensor is a function on a
//! discrete torus. Storage is row-major in exactly the order of the flat
//! index [`delta`], which makes vectorization a reinterpretation of the
//! buffer.

pub mod codec;
mod multi;

pub use multi::MultiTensor;

use crate::error::{shape_err, Error, Result};
use std::fmt;

/// Grid dimensions `(n_1, ..., n_d)` with every `n_i >= 1`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return shape_err("a shape needs at least one axis");
        }
        if let Some(pos) = dims.iter().position(|&n| n == 0) {
            return shape_err(format!("axis {pos} has size 0"));
        }
        let mut strides = vec![1usize; dims.len()];
        let mut len = 1usize;
        for i in (0..dims.len()).rev() {
            strides[i] = len;
            len = len
                .checked_mul(dims[i])
                .ok_or_else(|| Error::Capacity(format!("shape {dims:?} overflows usize")))?;
        }
        Ok(Self {
            dims: dims.to_vec(),
            strides,
            len,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    /// Total element count `N`.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false; a valid shape holds at least one element.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn check_arity(&self, arity: usize) -> Result<()> {
        if arity != self.arity() {
            return shape_err(format!(
                "index arity {arity} does not match shape arity {}",
                self.arity()
            ));
        }
        Ok(())
    }

    /// Flat index of an already-checked index vector.
    pub(crate) fn flat(&self, index: &[i64]) -> usize {
        index
            .iter()
            .zip(&self.dims)
            .zip(&self.strides)
            .map(|((&i, &n), &s)| (i.rem_euclid(n as i64) as usize) * s)
            .sum()
    }

    pub(crate) fn unflat(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.arity()];
        for (slot, &s) in out.iter_mut().zip(&self.strides) {
            *slot = k / s;
            k %= s;
        }
        out
    }

    /// `table[delta(M)] = delta(M + offset)` for every grid point `M`.
    ///
    /// This is the gather permutation behind both translation
    /// (`offset = -M`) and circular correlation (one table per filter tap).
    pub fn shifted_gather(&self, offset: &[i64]) -> Vec<usize> {
        debug_assert_eq!(offset.len(), self.arity());
        let mut acc = vec![0usize];
        for ((&n, &s), &o) in self.dims.iter().zip(&self.strides).zip(offset) {
            let o = o.rem_euclid(n as i64) as usize;
            let mut next = Vec::with_capacity(acc.len() * n);
            for &a in &acc {
                next.extend((0..n).map(|m| a + ((m + o) % n) * s));
            }
            acc = next;
        }
        acc
    }

    /// Parses `"6x6"` / `"3,4"` style shape strings.
    pub fn parse(text: &str) -> Result<Self> {
        let dims = text
            .split(['x', 'X', ','])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Input(format!("bad shape component {p:?} in {text:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&dims)
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Shape{:?}", self.dims)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Position in `[0, N)` of the row-major flattening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlatIndex(pub usize);

/// Integer offset acting on a circular tensor by `T^M(x)[I] = x[I - M]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TranslationVector(pub Vec<i64>);

impl TranslationVector {
    pub fn zero(arity: usize) -> Self {
        Self(vec![0; arity])
    }

    pub fn offsets(&self) -> &[i64] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|m| -m).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Canonical representative with every component in `[0, n_i)`.
    pub fn reduced(&self, shape: &Shape) -> Self {
        Self(
            self.0
                .iter()
                .zip(shape.dims())
                .map(|(&m, &n)| m.rem_euclid(n as i64))
                .collect(),
        )
    }

    /// Every translation of the grid, in flat-index order.
    pub fn all(shape: &Shape) -> Vec<Self> {
        (0..shape.len())
            .map(|k| Self(shape.unflat(k).into_iter().map(|v| v as i64).collect()))
            .collect()
    }
}

impl From<Vec<i64>> for TranslationVector {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

/// Mixed-radix flat index of `index`, after componentwise reduction.
pub fn delta(index: &[i64], shape: &Shape) -> Result<FlatIndex> {
    shape.check_arity(index.len())?;
    Ok(FlatIndex(shape.flat(index)))
}

/// Inverse of [`delta`] on `[0, N)`.
pub fn delta_inverse(k: FlatIndex, shape: &Shape) -> Result<Vec<usize>> {
    if k.0 >= shape.len() {
        return Err(Error::Range {
            index: k.0,
            len: shape.len(),
        });
    }
    Ok(shape.unflat(k.0))
}

/// Dense single-channel tensor with circular indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct CircularTensor {
    shape: Shape,
    values: Vec<f64>,
}

impl CircularTensor {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return shape_err(format!(
                "{} values supplied for shape {shape} ({} elements)",
                values.len(),
                shape.len()
            ));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        let values = vec![0.0; shape.len()];
        Self { shape, values }
    }

    pub fn from_fn(shape: Shape, f: impl FnMut(usize) -> f64) -> Self {
        let values = (0..shape.len()).map(f).collect();
        Self { shape, values }
    }

    /// One-hot tensor with a 1 at `index` (reduced modulo the shape).
    pub fn one_hot(shape: Shape, index: &[i64]) -> Result<Self> {
        let k = delta(index, &shape)?;
        let mut t = Self::zeros(shape);
        t.values[k.0] = 1.0;
        Ok(t)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Element at any integer index; components are taken modulo the shape.
    ///
    /// Panics if the index arity does not match the shape.
    pub fn get(&self, index: &[i64]) -> f64 {
        assert_eq!(index.len(), self.shape.arity(), "index arity mismatch");
        self.values[self.shape.flat(index)]
    }

    pub fn translate(&self, m: &TranslationVector) -> Result<Self> {
        self.shape.check_arity(m.arity())?;
        Ok(Self {
            shape: self.shape.clone(),
            values: gather(&self.values, &self.shape.shifted_gather(&m.neg().0)),
        })
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return shape_err(format!(
                "inner product of {} and {}",
                self.shape, other.shape
            ));
        }
        Ok(dot(&self.values, &other.values))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    /// The flat vector `X` with `X[delta(I)] = x[I]`.
    pub fn vectorize(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn devectorize(values: Vec<f64>, shape: Shape) -> Result<Self> {
        Self::new(shape, values)
    }
}

pub(crate) fn gather(src: &[f64], table: &[usize]) -> Vec<f64> {
    table.iter().map(|&j| src[j]).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
