//! Dense affine layer with an elementwise activation.
//!
//! `y = activation(x · W + b)` with `W` stored as `in_dim × out_dim`, so a batch
//! of row vectors is transformed by a single matrix product.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(format!(
                "unknown activation `{other}`, expected relu, tanh or identity"
            )),
        }
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    /// ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

/// Values kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct DenseForward {
    pub pre_activation: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::Dimension(format!(
                "bias has length {} but weights are {}x{}",
                bias.len(),
                weights.rows(),
                weights.cols()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(in_dim, out_dim),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Uniform Glorot initialization, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        if in_dim + out_dim > 0 {
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            for w in layer.weights.as_mut_slice() {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub(crate) fn split_params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (self.weights.as_mut_slice(), &mut self.bias)
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    pub fn forward(&self, input: &Matrix) -> Result<DenseForward> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(
                "dense_forward",
                input.shape(),
                self.weights.shape(),
            ));
        }
        let mut pre = input.matmul(&self.weights)?;
        for r in 0..pre.rows() {
            for (z, &b) in pre.row_mut(r).iter_mut().zip(&self.bias) {
                *z += b;
            }
        }
        let output = if self.activation == Activation::Identity {
            pre.clone()
        } else {
            pre.map(|z| self.activation.apply(z))
        };
        Ok(DenseForward {
            pre_activation: pre,
            output,
        })
    }

    /// Gradient of the pre-activation given the gradient of the output.
    pub fn activation_backward(
        &self,
        cache: &DenseForward,
        grad_output: &Matrix,
    ) -> Result<Matrix> {
        if grad_output.shape() != cache.output.shape() {
            return Err(Error::shape(
                "dense_backward",
                grad_output.shape(),
                cache.output.shape(),
            ));
        }
        if self.activation == Activation::Identity {
            return Ok(grad_output.clone());
        }
        let mut grad_pre = grad_output.clone();
        let act = self.activation;
        for ((g, &z), &y) in grad_pre
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre_activation.as_slice())
            .zip(cache.output.as_slice())
        {
            *g *= act.derivative(z, y);
        }
        Ok(grad_pre)
    }

    /// Backward pass. Returns parameter gradients and, when `need_input_grad`,
    /// the gradient with respect to `input`.
    pub fn backward(
        &self,
        input: &Matrix,
        cache: &DenseForward,
        grad_output: &Matrix,
        need_input_grad: bool,
    ) -> Result<(DenseGrads, Option<Matrix>)> {
        let grad_pre = self.activation_backward(cache, grad_output)?;
        let grads = DenseGrads {
            weights: input.t_matmul(&grad_pre)?,
            bias: grad_pre.sum_rows(),
        };
        let grad_input = if need_input_grad {
            Some(grad_pre.matmul_t(&self.weights)?)
        } else {
            None
        };
        Ok((grads, grad_input))
    }
}

impl DenseGrads {
    pub fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            weights: Matrix::zeros(layer.in_dim(), layer.out_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }
}
