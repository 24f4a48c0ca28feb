//! Task network and the combined domain-embedding classifier.
//!
//! The task network maps an unlabeled sample `S ∈ R^{n×d}` of one domain to a
//! fixed-length embedding by mean pooling over the sample dimension:
//!
//! ```text
//! H   = act(S·W₁ + b₁)          n × H_t
//! h̄   = (1/n) Σᵢ Hᵢ              1 × H_t
//! T_X = h̄·W₂ + b₂                1 × D_t
//! ```
//!
//! The projection is affine, so pooling before it gives the same value as
//! pooling the projected rows and costs `n` times less. The main network
//! classifies `[x ‖ T_X]` for every point `x` of the domain.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::nn::{
    self, argmax, softmax_cross_entropy_weighted, Activation, DenseForward, DenseGrads, DenseLayer,
    Gradients, LossValue, Matrix, Parameterized,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct D2VDims {
    pub input_dim: usize,
    pub task_hidden: usize,
    pub embedding_dim: usize,
    pub main_hidden: usize,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainEmbedding {
    pub domain_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNetwork {
    hidden: DenseLayer,
    projection: DenseLayer,
}

#[derive(Debug, Clone)]
pub struct TaskForward {
    pub hidden: DenseForward,
    pub pooled: Matrix,
    pub embedding: Vec<f64>,
}

impl TaskNetwork {
    pub fn from_layers(hidden: DenseLayer, projection: DenseLayer) -> Result<Self> {
        if hidden.out_dim() != projection.in_dim() {
            return Err(Error::Dimension(format!(
                "task hidden emits {} features but projection expects {}",
                hidden.out_dim(),
                projection.in_dim()
            )));
        }
        if projection.activation() != Activation::Identity {
            return Err(Error::Dimension("task projection must be linear".into()));
        }
        Ok(Self { hidden, projection })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.projection.out_dim()
    }

    pub fn hidden(&self) -> &DenseLayer {
        &self.hidden
    }

    pub fn projection(&self) -> &DenseLayer {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut DenseLayer {
        &mut self.projection
    }

    pub fn forward_cached(&self, sample: &Matrix) -> Result<TaskForward> {
        if sample.rows() == 0 {
            return Err(Error::EmptySample);
        }
        let hidden = self.hidden.forward(sample)?;
        let pooled = hidden.output.mean_rows().expect("non-empty sample");
        let pooled = Matrix::from_vec(1, pooled.len(), pooled)?;
        let embedding = self.projection.forward(&pooled)?.output.into_vec();
        Ok(TaskForward {
            hidden,
            pooled,
            embedding,
        })
    }

    /// Permutation-invariant statistic of `sample`.
    pub fn embed(&self, sample: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward_cached(sample)?.embedding)
    }

    /// Gradients of both task layers given the gradient of the embedding.
    /// Each sample row receives `1/n` of the pooled gradient.
    pub fn backward(
        &self,
        sample: &Matrix,
        cache: &TaskForward,
        grad_embedding: &[f64],
    ) -> Result<(DenseGrads, DenseGrads)> {
        let grad_embedding = Matrix::from_vec(1, grad_embedding.len(), grad_embedding.to_vec())?;
        if grad_embedding.cols() != self.embedding_dim() {
            return Err(Error::shape(
                "task_backward",
                grad_embedding.shape(),
                self.projection.weights().shape(),
            ));
        }
        let projection = DenseGrads {
            weights: cache.pooled.t_matmul(&grad_embedding)?,
            bias: grad_embedding.as_slice().to_vec(),
        };
        let grad_pooled = grad_embedding.matmul_t(self.projection.weights())?;
        let n = sample.rows();
        let share: Vec<f64> = grad_pooled
            .as_slice()
            .iter()
            .map(|g| g / n as f64)
            .collect();
        let mut grad_rows = Matrix::zeros(n, share.len());
        for r in 0..n {
            grad_rows.row_mut(r).copy_from_slice(&share);
        }
        let (hidden, _) = self
            .hidden
            .backward(sample, &cache.hidden, &grad_rows, false)?;
        Ok((hidden, projection))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct D2VModel {
    task: TaskNetwork,
    main: Mlp,
}

impl D2VModel {
    /// Glorot-initialized model. Layers are drawn in the order task hidden,
    /// task projection, main hidden, main output.
    pub fn new<R: Rng + ?Sized>(dims: D2VDims, activation: Activation, rng: &mut R) -> Self {
        let hidden = DenseLayer::glorot(dims.input_dim, dims.task_hidden, activation, rng);
        let projection = DenseLayer::glorot(
            dims.task_hidden,
            dims.embedding_dim,
            Activation::Identity,
            rng,
        );
        let main = Mlp::new(
            dims.input_dim + dims.embedding_dim,
            dims.main_hidden,
            dims.num_classes,
            activation,
            rng,
        );
        Self {
            task: TaskNetwork { hidden, projection },
            main,
        }
    }

    pub fn from_parts(task: TaskNetwork, main: Mlp) -> Result<Self> {
        if main.input_dim() != task.input_dim() + task.embedding_dim() {
            return Err(Error::Dimension(format!(
                "main network expects {} inputs, task network provides {} features + {} embedding",
                main.input_dim(),
                task.input_dim(),
                task.embedding_dim()
            )));
        }
        Ok(Self { task, main })
    }

    pub fn dims(&self) -> D2VDims {
        D2VDims {
            input_dim: self.task.input_dim(),
            task_hidden: self.task.hidden.out_dim(),
            embedding_dim: self.task.embedding_dim(),
            main_hidden: self.main.hidden_dim(),
            num_classes: self.main.num_classes(),
        }
    }

    pub fn activation(&self) -> Activation {
        self.main.activation()
    }

    pub fn task(&self) -> &TaskNetwork {
        &self.task
    }

    pub fn task_mut(&mut self) -> &mut TaskNetwork {
        &mut self.task
    }

    pub fn main(&self) -> &Mlp {
        &self.main
    }

    pub fn embed(&self, sample: &Matrix) -> Result<Vec<f64>> {
        self.check_features(sample)?;
        self.task.embed(sample)
    }

    pub fn embed_domain(&self, domain_id: &str, sample: &Matrix) -> Result<DomainEmbedding> {
        Ok(DomainEmbedding {
            domain_id: domain_id.to_string(),
            vector: self.embed(sample)?,
        })
    }

    /// Main-network logits for `points` given a precomputed embedding.
    pub fn logits_with_embedding(&self, points: &Matrix, embedding: &[f64]) -> Result<Matrix> {
        self.check_features(points)?;
        if embedding.len() != self.task.embedding_dim() {
            return Err(Error::Dimension(format!(
                "embedding has length {}, expected {}",
                embedding.len(),
                self.task.embedding_dim()
            )));
        }
        self.main.forward(&points.hcat_row(embedding))
    }

    pub fn forward(&self, points: &Matrix, domain_sample: &Matrix) -> Result<Matrix> {
        self.check_nonempty(points)?;
        let embedding = self.embed(domain_sample)?;
        self.logits_with_embedding(points, &embedding)
    }

    /// Mean cross-entropy of `points` and exact gradients for both networks.
    pub fn backward(
        &self,
        points: &Matrix,
        domain_sample: &Matrix,
        labels: &[usize],
    ) -> Result<(LossValue, Gradients)> {
        self.backward_weighted(points, domain_sample, labels, None)
    }

    pub fn backward_weighted(
        &self,
        points: &Matrix,
        domain_sample: &Matrix,
        labels: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<(LossValue, Gradients)> {
        self.check_nonempty(points)?;
        self.check_features(points)?;
        self.check_features(domain_sample)?;
        let task_cache = self.task.forward_cached(domain_sample)?;
        let input = points.hcat_row(&task_cache.embedding);
        let main_cache = self.main.forward_cached(&input)?;
        let (loss, grad_logits) =
            softmax_cross_entropy_weighted(&main_cache.output.output, labels, weights)?;
        let (gm_hidden, gm_out, g_input) =
            self.main
                .backward(&input, &main_cache, &grad_logits, true)?;
        let g_input = g_input.expect("requested");
        let d = self.task.input_dim();
        let grad_embedding: Vec<f64> = g_input.columns(d, g_input.cols()).sum_rows();
        let (gt_hidden, gt_proj) =
            self.task
                .backward(domain_sample, &task_cache, &grad_embedding)?;
        Ok((
            loss,
            Gradients::from_dense(&[&gt_hidden, &gt_proj, &gm_hidden, &gm_out]),
        ))
    }

    pub fn predict(&self, points: &Matrix, domain_sample: &Matrix) -> Result<Vec<usize>> {
        let logits = self.forward(points, domain_sample)?;
        Ok(logits.row_iter().map(argmax).collect())
    }

    fn check_features(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.task.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} features, got a {}x{} matrix",
                self.task.input_dim(),
                m.rows(),
                m.cols()
            )));
        }
        Ok(())
    }

    fn check_nonempty(&self, points: &Matrix) -> Result<()> {
        if points.rows() == 0 {
            return Err(Error::Dimension("no points to classify".into()));
        }
        Ok(())
    }
}

impl Parameterized for D2VModel {
    fn param_names(&self) -> Vec<String> {
        [
            "task.hidden.weights",
            "task.hidden.bias",
            "task.projection.weights",
            "task.projection.bias",
            "main.hidden.weights",
            "main.hidden.bias",
            "main.output.weights",
            "main.output.bias",
        ]
        .map(String::from)
        .to_vec()
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = nn::layer_params(&[&self.task.hidden, &self.task.projection]);
        p.extend(self.main.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = nn::layer_params_mut(vec![&mut self.task.hidden, &mut self.task.projection]);
        p.extend(self.main.params_mut());
        p
    }
}
