use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dataset::DomainSource;
use crate::error::{Error, Result};
use crate::nn::Activation;

/// Size of the unlabeled batch fed to the task network each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskBatch {
    /// The whole domain.
    #[default]
    All,
    Size(usize),
}

impl Serialize for TaskBatch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TaskBatch::All => s.serialize_str("all"),
            TaskBatch::Size(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for TaskBatch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = TaskBatch;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"all\" or a positive integer")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<TaskBatch, E> {
                v.parse().map_err(E::custom)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<TaskBatch, E> {
                Ok(TaskBatch::Size(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<TaskBatch, E> {
                usize::try_from(v)
                    .map(TaskBatch::Size)
                    .map_err(|_| E::custom("task_batch must be positive"))
            }
        }
        d.deserialize_any(V)
    }
}

impl std::str::FromStr for TaskBatch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(TaskBatch::All);
        }
        s.parse::<usize>()
            .map(TaskBatch::Size)
            .map_err(|_| format!("task_batch `{s}` is neither \"all\" nor a count"))
    }
}

impl fmt::Display for TaskBatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskBatch::All => f.write_str("all"),
            TaskBatch::Size(n) => write!(f, "{n}"),
        }
    }
}

/// Everything that determines a training run, given the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub task_hidden: usize,
    pub main_hidden: usize,
    pub embedding_dim: usize,
    pub main_batch: usize,
    pub task_batch: TaskBatch,
    pub epochs: usize,
    pub seed: u64,
    pub activation: Activation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 1e-4,
            task_hidden: 32,
            main_hidden: 32,
            embedding_dim: 16,
            main_batch: 32,
            task_batch: TaskBatch::All,
            epochs: 200,
            seed: 0,
            activation: Activation::Relu,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::InvalidConfig(format!("{field}: {why}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be a positive number, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(
                "weight_decay",
                format!("must be >= 0, got {}", self.weight_decay),
            );
        }
        if self.lr * self.weight_decay >= 1.0 {
            return bad("weight_decay", "lr * weight_decay must stay below 1".into());
        }
        if self.task_hidden == 0 {
            return bad("task_hidden", "must be >= 1".into());
        }
        if self.main_hidden == 0 {
            return bad("main_hidden", "must be >= 1".into());
        }
        if self.main_batch == 0 {
            return bad("main_batch", "must be >= 1".into());
        }
        if let TaskBatch::Size(k) = self.task_batch {
            if k < self.main_batch {
                return bad(
                    "task_batch",
                    format!("{k} is smaller than main_batch {}", self.main_batch),
                );
            }
        }
        Ok(())
    }

    /// Validation against the source domains a run will train on.
    pub fn validate_for<D: DomainSource>(&self, sources: &[D]) -> Result<()> {
        self.validate()?;
        let smallest = sources
            .iter()
            .map(|d| d.features().rows())
            .min()
            .unwrap_or(0);
        if self.main_batch > smallest {
            return Err(Error::InvalidConfig(format!(
                "main_batch: {} exceeds the smallest source domain ({smallest} points)",
                self.main_batch
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        json_hash(self)
    }
}

/// SHA-256 of the compact JSON encoding with object keys sorted, hex encoded.
/// Hashing the stored JSON of a value gives the same digest as the value.
pub fn json_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("value serializes");
    let text = serde_json::to_string(&canonical).expect("value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}
