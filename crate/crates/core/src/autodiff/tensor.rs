//! Dense n-dimensional arrays over the build-wide float type.

use crate::error::{Error, Result};

/// Build-wide float width. 64-bit by default; the `f32` feature switches the
/// whole workspace to 32-bit.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

/// Natural log of 2π, at the build float width.
pub const LN_2PI: Real = 1.837_877_066_409_345_5;

/// A dense tensor: contiguous row-major values plus a shape.
///
/// The empty shape `[]` is a scalar holding exactly one value. Tensors are
/// plain values; gradient participation is declared with `requires_grad` and
/// takes effect when the tensor is placed on a [`Tape`](super::Tape) as a
/// leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<Real>,
    requires_grad: bool,
}

impl Tensor {
    /// Build a tensor, validating that the shape matches the payload and
    /// every value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<Real>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {expected} values, got {}",
                data.len()
            )));
        }
        let tensor = Self {
            shape,
            data,
            requires_grad: false,
        };
        tensor.check_finite("tensor construction")?;
        Ok(tensor)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
        }
    }

    pub fn full(shape: Vec<usize>, value: Real) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
            requires_grad: false,
        }
    }

    /// A shape-`[]` scalar.
    pub fn scalar(value: Real) -> Self {
        Self {
            shape: vec![],
            data: vec![value],
            requires_grad: false,
        }
    }

    /// Mark this tensor as a trainable parameter.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().product::<usize>() == 1
    }

    /// The single value of a scalar (or one-element) tensor.
    pub fn item(&self) -> Result<Real> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Usage(format!(
                "item() on tensor with {} elements",
                self.data.len()
            )))
        }
    }

    /// Reinterpret the payload under a new shape of equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {} elements into {shape:?}",
                self.data.len()
            )));
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
            requires_grad: self.requires_grad,
        })
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[Real] {
        let cols = self.shape[self.shape.len() - 1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub(crate) fn check_finite(&self, context: &str) -> Result<()> {
        check_finite_slice(&self.data, context)
    }
}

/// Widen a build-float to f64 (identity on 64-bit builds).
#[inline]
pub(crate) fn widen(x: Real) -> f64 {
    #[cfg(feature = "f32")]
    {
        f64::from(x)
    }
    #[cfg(not(feature = "f32"))]
    {
        x
    }
}

pub(crate) fn check_finite_slice(values: &[Real], context: &str) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{context}: element {pos} is {}",
            values[pos]
        )));
    }
    Ok(())
}
