//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! [`Tensor`] is plain storage (shape + contiguous row-major values).
//! Differentiable computations are built on a [`Tape`]: every operation
//! appends a node holding its output value and backward rule, so the tape
//! order is a topological order and the backward pass is a single reverse
//! sweep with additive gradient accumulation.
//!
//! The operation set is exactly what a convolutional capsule classifier
//! needs: strided valid convolution (2 and 3 spatial dims), reshape,
//! batched capsule transforms, softmax, vector norms, elementwise
//! arithmetic, reductions, ReLU, squash, and the two classification losses.

mod conv;
pub mod cwts;
mod tape;

pub use conv::ConvSpec;
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

/// Errors from tensor shape checking and tape lookups.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("variable #{index} is not recorded on this tape")]
    TapeMissing { index: usize },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }
}

/// A dense N-dimensional array of f64 values, row-major.
///
/// Rank-0 tensors (empty shape, one element) hold scalars such as losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::shape(
                "from_vec",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The single value of a scalar (one-element) tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Same data under a new shape with equal element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(TensorError::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.data.iter()
    }
}

/// Softmax along `axis`, with max subtraction for stability.
///
/// Shared by the tape operation and the off-tape routing iterations.
pub(crate) fn softmax_into(input: &[f64], shape: &[usize], axis: usize, out: &mut [f64]) {
    let lane = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    for o in 0..outer {
        for i in 0..inner {
            let base = o * lane * inner + i;
            let mut max = f64::NEG_INFINITY;
            for k in 0..lane {
                max = max.max(input[base + k * inner]);
            }
            let mut sum = 0.0;
            for k in 0..lane {
                let e = (input[base + k * inner] - max).exp();
                out[base + k * inner] = e;
                sum += e;
            }
            for k in 0..lane {
                out[base + k * inner] /= sum;
            }
        }
    }
}

/// Squash nonlinearity for one capsule vector:
/// v = (|s|^2 / (1 + |s|^2)) * s / |s|, with squash(0) = 0.
///
/// Output norm is |s|^2 / (1 + |s|^2), strictly below 1.
pub(crate) fn squash_into(row: &[f64], out: &mut [f64]) {
    let norm_sq: f64 = row.iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        out.fill(0.0);
        return;
    }
    let norm = norm_sq.sqrt();
    let scale = norm / (1.0 + norm_sq);
    for (o, v) in out.iter_mut().zip(row) {
        *o = v * scale;
    }
}
