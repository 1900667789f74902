//! Dense fp64 tensors and named parameter collections.
//!
//! Everything trainable in this crate lives in a [`ParamSet`]; tensors are
//! flat row-major `Vec<f64>` buffers with an explicit [`Shape`].

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{CoreError, Result};

/// Tensor shape: rank 1..=4, every dim positive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(CoreError::InvalidShape(format!(
                "rank must be 1..=4, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(CoreError::InvalidShape(format!(
                "all dims must be positive, got {dims:?}"
            )));
        }
        Ok(Shape(dims.to_vec()))
    }

    /// Shape of a scalar, represented as `[1]`.
    pub fn scalar() -> Self {
        Shape(vec![1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Size of the last axis.
    pub fn last(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Number of rows when the tensor is viewed as `[rows, last]`.
    pub fn rows(&self) -> usize {
        self.numel() / self.last()
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Shape with the last axis replaced.
    pub fn with_last(&self, last: usize) -> Result<Shape> {
        let mut dims = self.0.clone();
        *dims.last_mut().unwrap() = last;
        Shape::new(&dims)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

/// Dense fp64 tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(CoreError::InvalidShape(format!(
                "shape {shape} wants {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Shape, v: f64) -> Self {
        let n = shape.numel();
        Tensor {
            shape,
            data: vec![v; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![v],
        }
    }

    /// Rank-1 tensor from a vec.
    pub fn from_vec(data: Vec<f64>) -> Self {
        let shape = Shape::new(&[data.len()]).expect("non-empty vec");
        Tensor { shape, data }
    }

    /// Rank-2 tensor from rows × cols data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::new(&[rows, cols])?, data)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the flattened data.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Named, versioned collection of parameter tensors.
///
/// Iteration order is lexicographic by name, which fixes the order of every
/// init, gradient and optimizer traversal — a prerequisite for the bit-exact
/// determinism contract.
#[derive(Clone, Debug)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
    version: u64,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            tensors: BTreeMap::new(),
            version: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
        self.version += 1;
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| CoreError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.version += 1;
        self.tensors
            .get_mut(name)
            .ok_or_else(|| CoreError::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Norm of each tensor, for diagnostics on aborts.
    pub fn norms(&self) -> Vec<(String, f64)> {
        self.tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.norm()))
            .collect()
    }

    /// Order-sensitive FNV-1a hash over names and raw f64 bits.
    /// Used to assert that evaluation never mutates parameters.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        for (name, t) in &self.tensors {
            for b in name.as_bytes() {
                eat(*b);
            }
            for v in t.data() {
                for b in v.to_le_bytes() {
                    eat(b);
                }
            }
        }
        h
    }
}
