//! One-hidden-layer perceptron. Serves as the main network of [`D2VModel`]
//! and, on its own, as the pooling baseline trained on all source domains
//! at once.
//!
//! [`D2VModel`]: super::D2VModel

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    self, argmax, softmax_cross_entropy_weighted, Activation, DenseForward, DenseGrads, DenseLayer,
    Gradients, LossValue, Matrix, Parameterized,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    hidden: DenseLayer,
    output: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct MlpForward {
    pub hidden: DenseForward,
    pub output: DenseForward,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let hidden = DenseLayer::glorot(input_dim, hidden_dim, activation, rng);
        let output = DenseLayer::glorot(hidden_dim, num_classes, Activation::Identity, rng);
        Self { hidden, output }
    }

    pub fn from_layers(hidden: DenseLayer, output: DenseLayer) -> Result<Self> {
        if hidden.out_dim() != output.in_dim() {
            return Err(Error::Dimension(format!(
                "hidden layer emits {} features but output layer expects {}",
                hidden.out_dim(),
                output.in_dim()
            )));
        }
        if output.activation() != Activation::Identity {
            return Err(Error::Dimension("output layer must be linear".into()));
        }
        Ok(Self { hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.out_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.output.out_dim()
    }

    pub fn activation(&self) -> Activation {
        self.hidden.activation()
    }

    pub fn hidden(&self) -> &DenseLayer {
        &self.hidden
    }

    pub fn output(&self) -> &DenseLayer {
        &self.output
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<MlpForward> {
        let hidden = self.hidden.forward(input)?;
        let output = self.output.forward(&hidden.output)?;
        Ok(MlpForward { hidden, output })
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(input)?.output.output)
    }

    /// Backpropagates `grad_logits`. The input gradient is only formed when asked for.
    pub fn backward(
        &self,
        input: &Matrix,
        cache: &MlpForward,
        grad_logits: &Matrix,
        need_input_grad: bool,
    ) -> Result<(DenseGrads, DenseGrads, Option<Matrix>)> {
        let (g_out, g_hidden_act) =
            self.output
                .backward(&cache.hidden.output, &cache.output, grad_logits, true)?;
        let g_hidden_act = g_hidden_act.expect("requested");
        let (g_hidden, g_input) =
            self.hidden
                .backward(input, &cache.hidden, &g_hidden_act, need_input_grad)?;
        Ok((g_hidden, g_out, g_input))
    }

    /// Mean cross-entropy over the batch and gradients for every parameter.
    pub fn loss_and_grads(
        &self,
        input: &Matrix,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<(LossValue, Gradients)> {
        let cache = self.forward_cached(input)?;
        let (loss, grad) = softmax_cross_entropy_weighted(&cache.output.output, labels, weights)?;
        let (gh, go, _) = self.backward(input, &cache, &grad, false)?;
        Ok((loss, Gradients::from_dense(&[&gh, &go])))
    }

    pub fn predict(&self, input: &Matrix) -> Result<Vec<usize>> {
        let logits = self.forward(input)?;
        Ok(logits.row_iter().map(argmax).collect())
    }
}

impl Parameterized for Mlp {
    fn param_names(&self) -> Vec<String> {
        [
            "hidden.weights",
            "hidden.bias",
            "output.weights",
            "output.bias",
        ]
        .map(String::from)
        .to_vec()
    }

    fn params(&self) -> Vec<&[f64]> {
        nn::layer_params(&[&self.hidden, &self.output])
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        nn::layer_params_mut(vec![&mut self.hidden, &mut self.output])
    }
}
