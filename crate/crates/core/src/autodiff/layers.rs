//! Dense layer with Glorot initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::{Real, Tensor};
use crate::error::Result;

/// A fully connected layer's parameters: weights `[in, out]`, bias `[out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data: Vec<Real> = (0..in_dim * out_dim)
            .map(|_| (rng.random::<f64>() * 2.0 * limit - limit) as Real)
            .collect();
        let mut weights = Tensor::zeros(vec![in_dim, out_dim]).with_grad();
        weights.data_mut().copy_from_slice(&data);
        Self {
            weights,
            bias: Tensor::zeros(vec![out_dim]).with_grad(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Place this layer's parameters on a tape.
    pub fn bind(&self, tape: &mut Tape) -> DenseVars {
        DenseVars {
            weights: tape.param(&self.weights),
            bias: tape.param(&self.bias),
        }
    }
}

/// Tape handles for one [`Dense`] layer within a forward pass.
#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub weights: Var,
    pub bias: Var,
}

impl DenseVars {
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        tape.dense(input, self.weights, self.bias)
    }
}
