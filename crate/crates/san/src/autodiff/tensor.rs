//! Dense row-major tensor value type.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SanError};
use crate::Real;

/// A dense tensor: row-major data plus a shape.
///
/// `requires_grad` marks leaves that should receive gradients when the tensor
/// is inserted into a [`super::Tape`]; it has no effect outside the tape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<Real>,
    #[serde(default)]
    pub requires_grad: bool,
}

impl Tensor {
    /// Build a tensor, checking that the shape is sane and matches the data.
    ///
    /// Every dimension must be positive and the product of dimensions must
    /// equal `data.len()`.
    pub fn new(shape: Vec<usize>, data: Vec<Real>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(SanError::Config(format!(
                "tensor shape must have positive dimensions, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(SanError::ShapeMismatch {
                op: "Tensor::new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
        })
    }

    /// 2-D convenience constructor.
    pub fn matrix(rows: usize, cols: usize, data: Vec<Real>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// 1-D convenience constructor.
    pub fn vector(data: Vec<Real>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    /// 0-ish tensor: a single value with shape `[1]`.
    pub fn scalar(v: Real) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
        }
    }

    /// All-zero tensor of the given shape (shape must already be valid).
    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
        }
    }

    /// Mark the tensor as a gradient-carrying leaf (builder style).
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2, "rows() on non-matrix {:?}", self.shape);
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.shape.len(), 2, "cols() on non-matrix {:?}", self.shape);
        self.shape[1]
    }

    /// Borrow row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[Real] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Element access for a 2-D tensor.
    pub fn at(&self, i: usize, j: usize) -> Real {
        self.data[i * self.cols() + j]
    }

    /// Per-row argmax of a 2-D tensor; ties resolve to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        let (r, c) = (self.rows(), self.cols());
        (0..r)
            .map(|i| {
                let row = &self.data[i * c..(i + 1) * c];
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
