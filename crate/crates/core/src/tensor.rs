//! Dense row-major containers.

use crate::error::{Error, Result};

/// Vocabulary index of the blank symbol.
pub const BLANK: usize = 0;

/// Tolerance on the per-cell sum of a probability lattice.
pub const SUM_TOL: f64 = 1e-9;

/// Row-major `f64` tensor with positive dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "shape {shape:?} must have at least one axis and no zero dims"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Length of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    /// Iterator over contiguous slices along the last axis.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.last_dim())
    }

    pub fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        let d = self.last_dim();
        self.data.chunks_exact_mut(d)
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Output lattice of a transducer joint network: one distribution over the
/// vocabulary per (frame, token position) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbLattice {
    probs: Tensor,
}

impl ProbLattice {
    /// Validates that every cell is a probability vector.
    pub fn new(probs: Tensor) -> Result<Self> {
        if probs.rank() != 3 {
            return Err(Error::Dimension(format!(
                "lattice must be rank 3 [T, U+1, V], got shape {:?}",
                probs.shape()
            )));
        }
        for (cell, row) in probs.rows().enumerate() {
            if let Some(x) = row.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Domain(format!("cell {cell}: entry {x} outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::Domain(format!("cell {cell}: sums to {s}")));
            }
        }
        Ok(Self { probs })
    }

    /// Builds a lattice from logits by a cell-wise softmax.
    pub fn from_logits(logits: &Tensor) -> Result<Self> {
        Self::new(crate::dist::softmax(logits)?)
    }

    pub fn t_len(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn u_len(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn vocab(&self) -> usize {
        self.probs.shape()[2]
    }

    pub fn n_cells(&self) -> usize {
        self.t_len() * self.u_len()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.probs
    }

    pub fn into_tensor(self) -> Tensor {
        self.probs
    }

    pub fn cell(&self, t: usize, u: usize) -> &[f64] {
        let v = self.vocab();
        let o = (t * self.u_len() + u) * v;
        &self.probs.data()[o..o + v]
    }

    pub fn cells(&self) -> std::slice::ChunksExact<'_, f64> {
        self.probs.rows()
    }

    /// Element-wise natural log, as a tensor of the same shape.
    pub fn log(&self) -> Tensor {
        let data = self.probs.data().iter().map(|p| p.ln()).collect();
        Tensor {
            shape: self.probs.shape().to_vec(),
            data,
        }
    }

    pub fn same_shape(&self, other: &ProbLattice) -> Result<()> {
        if self.probs.shape() != other.probs.shape() {
            return Err(Error::Shape(format!(
                "lattice {:?} vs {:?}",
                self.probs.shape(),
                other.probs.shape()
            )));
        }
        Ok(())
    }
}

/// Per-layer hidden activations; a `[T_i, d_i]` or `[U_j, d_j]` tensor per layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HiddenStack {
    pub layers: Vec<Tensor>,
}

impl HiddenStack {
    pub fn new(layers: Vec<Tensor>) -> Self {
        Self { layers }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Errors with the offending layer index when the two stacks differ in
    /// layer count or any layer shape.
    pub fn check_compatible(&self, other: &HiddenStack) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "stack has {} layers, other has {}",
                self.len(),
                other.len()
            )));
        }
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "layer {i}: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Non-blank target tokens `y_1..y_U`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct TokenSequence {
    tokens: Vec<usize>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, vocab: usize) -> Result<Self> {
        if let Some(&bad) = tokens.iter().find(|&&k| k == BLANK || k >= vocab) {
            return Err(Error::Domain(format!(
                "token {bad} outside [1, {}]",
                vocab.saturating_sub(1)
            )));
        }
        Ok(Self { tokens })
    }

    /// Skips validation; callers guarantee tokens are in `[1, V-1]`.
    pub fn from_vec_unchecked(tokens: Vec<usize>) -> Self {
        Self { tokens }
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
