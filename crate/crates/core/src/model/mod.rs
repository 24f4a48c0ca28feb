//! The domain-embedding classifier and the pooling baseline.

pub mod checkpoint;
mod d2v;
mod mlp;

pub use checkpoint::Checkpoint;
pub use d2v::{D2VDims, D2VModel, DomainEmbedding, TaskForward, TaskNetwork};
pub use mlp::{Mlp, MlpForward};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{argmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    D2v,
    Baseline,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::D2v => "d2v",
            Method::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "d2v" => Ok(Method::D2v),
            "baseline" => Ok(Method::Baseline),
            other => Err(format!(
                "unknown method `{other}`, expected d2v or baseline"
            )),
        }
    }
}

/// Anything that can score the points of one domain, possibly using an
/// unlabeled sample of that domain.
pub trait DomainClassifier {
    fn input_dim(&self) -> usize;
    fn num_classes(&self) -> usize;
    fn domain_logits(&self, points: &Matrix, domain_sample: &Matrix) -> Result<Matrix>;

    fn domain_predict(&self, points: &Matrix, domain_sample: &Matrix) -> Result<Vec<usize>> {
        let logits = self.domain_logits(points, domain_sample)?;
        Ok(logits.row_iter().map(argmax).collect())
    }
}

impl DomainClassifier for D2VModel {
    fn input_dim(&self) -> usize {
        self.dims().input_dim
    }

    fn num_classes(&self) -> usize {
        self.dims().num_classes
    }

    fn domain_logits(&self, points: &Matrix, domain_sample: &Matrix) -> Result<Matrix> {
        self.forward(points, domain_sample)
    }
}

impl DomainClassifier for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        Mlp::num_classes(self)
    }

    fn domain_logits(&self, points: &Matrix, _domain_sample: &Matrix) -> Result<Matrix> {
        self.forward(points)
    }
}

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    D2v(D2VModel),
    Baseline(Mlp),
}

impl Model {
    pub fn method(&self) -> Method {
        match self {
            Model::D2v(_) => Method::D2v,
            Model::Baseline(_) => Method::Baseline,
        }
    }
}

impl DomainClassifier for Model {
    fn input_dim(&self) -> usize {
        match self {
            Model::D2v(m) => DomainClassifier::input_dim(m),
            Model::Baseline(m) => DomainClassifier::input_dim(m),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            Model::D2v(m) => DomainClassifier::num_classes(m),
            Model::Baseline(m) => DomainClassifier::num_classes(m),
        }
    }

    fn domain_logits(&self, points: &Matrix, domain_sample: &Matrix) -> Result<Matrix> {
        match self {
            Model::D2v(m) => m.domain_logits(points, domain_sample),
            Model::Baseline(m) => m.domain_logits(points, domain_sample),
        }
    }
}
