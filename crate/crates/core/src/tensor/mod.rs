//! Minimal dense `f64` tensor library with tape-based reverse-mode
//! differentiation.
//!
//! Design: a [`Tape`] is rebuilt for every forward pass; operations append
//! nodes and return [`NodeId`]s, and [`Tape::backward`] walks the nodes in
//! reverse creation order. Values are plain row-major `Vec<f64>` buffers.
//! There is no broadcasting beyond what the layers here need (bias rows,
//! per-channel conv bias), no views, and no graph reuse — simplicity and
//! determinism over generality.

mod gradcheck;
pub mod kernels;
mod nn;
mod param;
mod tape;

pub use gradcheck::grad_check;
pub use nn::{mlp_forward, Activation};
pub use param::{soft_update, AdamHyper, Param, ParamId, ParamStore};
pub use tape::{softmax_columns_data, squashed_gaussian, NodeId, Tape};

use serde::{Deserialize, Serialize};

/// Errors from tensor construction, graph building and optimization.
#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },
    #[error("configuration error in {op}: {details}")]
    Config { op: &'static str, details: String },
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Dense n-dimensional array of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build from parts. The number of elements must match the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape_len(&shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "Tensor::new",
                details: format!("shape {:?} wants {} elements, got {}", shape, shape_len(&shape), data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape_len(shape)] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape_len(shape)] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Row-major matrix from nested rows; all rows must have equal length.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(TensorError::ShapeMismatch {
                    op: "Tensor::matrix",
                    details: format!("ragged rows: {} vs {}", row.len(), c),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterpret with a new shape of identical element count.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self, TensorError> {
        if shape_len(&shape) != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                details: format!("{:?} -> {:?}", self.shape, shape),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// 2-D element access.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
