//! Dense `f64` tensors and a reverse-mode tape.
//!
//! Everything the transformer needs is expressed on row-major matrices: a
//! tensor of shape `[.., n]` is treated as `numel / n` rows of length `n` by
//! the row-wise operations (softmax, layer norm, bias add).

mod adam;
mod gemm;
mod gradcheck;
mod params;
mod tape;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{finite_difference_check, GradCheckConfig};
pub use params::{Param, ParamCategory, ParamId, ParamStore};
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: expected a rank-2 tensor, got shape {shape:?}")]
    NotMatrix { op: &'static str, shape: Vec<usize> },
    #[error("softmax row {row} is fully masked")]
    FullyMaskedRow { row: usize },
    #[error("target {target} at position {position} is outside vocabulary of size {vocab}")]
    TargetOutOfRange { position: usize, target: usize, vocab: usize },
    #[error("index {index} out of range for extent {extent}")]
    IndexOutOfRange { index: usize, extent: usize },
    #[error("backward needs a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("tensor with shape {shape:?} needs {expected} values, got {actual}")]
    BadLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Row-major dense array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if expected != data.len() || shape.contains(&0) {
            return Err(TensorError::BadLength {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            shape: vec![rows.len(), cols],
            data: rows.concat(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Length of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn rows(&self) -> usize {
        self.numel() / self.cols().max(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }
}

/// Lower-triangular mask over `t` positions: entry `(i, j)` is kept iff `j <= i`.
pub fn causal_mask(t: usize) -> Vec<bool> {
    let mut mask = vec![false; t * t];
    for i in 0..t {
        for j in 0..=i {
            mask[i * t + j] = true;
        }
    }
    mask
}
