//! Small dense network engine: matrices, layers, loss, optimizer and
//! finite-difference gradient checks.

pub mod adam;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod matrix;

pub use adam::{adam_step, Adam, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use layer::{Activation, DenseForward, DenseGrads, DenseLayer};
pub use loss::{argmax, softmax_cross_entropy, softmax_cross_entropy_weighted, LossValue};
pub use matrix::Matrix;

/// A model whose trainable parameters are exposed as named flat blocks.
///
/// `params`, `params_mut` and `param_names` must list blocks in the same order,
/// and gradients produced for the model follow that order too.
pub trait Parameterized {
    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
}

/// Gradient blocks aligned with [`Parameterized::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn from_dense(layers: &[&DenseGrads]) -> Self {
        let mut blocks = Vec::with_capacity(layers.len() * 2);
        for g in layers {
            blocks.push(g.weights.as_slice().to_vec());
            blocks.push(g.bias.clone());
        }
        Self { blocks }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            for v in b {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }

    pub fn as_slices(&self) -> Vec<&[f64]> {
        self.blocks.iter().map(Vec::as_slice).collect()
    }
}

pub(crate) fn layer_params<'a>(layers: &[&'a DenseLayer]) -> Vec<&'a [f64]> {
    layers
        .iter()
        .flat_map(|l| [l.weights().as_slice(), l.bias()])
        .collect()
}

pub(crate) fn layer_params_mut(layers: Vec<&mut DenseLayer>) -> Vec<&mut [f64]> {
    let mut out = Vec::with_capacity(layers.len() * 2);
    for l in layers {
        let (w, b) = l.split_params_mut();
        out.push(w);
        out.push(b);
    }
    out
}
