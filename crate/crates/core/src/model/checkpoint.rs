//! Versioned JSON checkpoints. Every parameter block is stored as base64 of
//! its row-major little-endian `f64` bytes, so a load restores weights
//! bit-for-bit.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{D2VDims, D2VModel, Method, Mlp, Model, TaskNetwork};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Matrix};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    method: Method,
    config_hash: String,
    activation: Activation,
    dims: D2VDims,
    tensors: Vec<TensorRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

fn encode(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode(name: &str, text: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Checkpoint(format!(
            "tensor {name}: {} bytes for {expected} values",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint(format!(
            "tensor {name} has non-finite values"
        )));
    }
    Ok(values)
}

fn layer_records(prefix: &str, layer: &DenseLayer, out: &mut Vec<TensorRecord>) {
    out.push(TensorRecord {
        name: format!("{prefix}.weights"),
        rows: layer.in_dim(),
        cols: layer.out_dim(),
        data: encode(layer.weights().as_slice()),
    });
    out.push(TensorRecord {
        name: format!("{prefix}.bias"),
        rows: 1,
        cols: layer.out_dim(),
        data: encode(layer.bias()),
    });
}

struct TensorTable<'a>(&'a [TensorRecord]);

impl TensorTable<'_> {
    fn layer(
        &self,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
    ) -> Result<DenseLayer> {
        let w = self.find(&format!("{prefix}.weights"), in_dim, out_dim)?;
        let b = self.find(&format!("{prefix}.bias"), 1, out_dim)?;
        DenseLayer::new(Matrix::from_vec(in_dim, out_dim, w)?, b, act)
    }

    fn find(&self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let rec = self
            .0
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if (rec.rows, rec.cols) != (rows, cols) {
            return Err(Error::Checkpoint(format!(
                "tensor {name} is {}x{}, dims require {rows}x{cols}",
                rec.rows, rec.cols
            )));
        }
        decode(name, &rec.data, rows * cols)
    }
}

impl Checkpoint {
    pub fn new(model: Model, config_hash: impl Into<String>) -> Self {
        Self {
            model,
            config_hash: config_hash.into(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut tensors = Vec::new();
        let (dims, activation) = match &self.model {
            Model::D2v(m) => {
                layer_records("task.hidden", m.task().hidden(), &mut tensors);
                layer_records("task.projection", m.task().projection(), &mut tensors);
                layer_records("main.hidden", m.main().hidden(), &mut tensors);
                layer_records("main.output", m.main().output(), &mut tensors);
                (m.dims(), m.activation())
            }
            Model::Baseline(m) => {
                layer_records("hidden", m.hidden(), &mut tensors);
                layer_records("output", m.output(), &mut tensors);
                let dims = D2VDims {
                    input_dim: m.input_dim(),
                    task_hidden: 0,
                    embedding_dim: 0,
                    main_hidden: m.hidden_dim(),
                    num_classes: m.num_classes(),
                };
                (dims, m.activation())
            }
        };
        let file = CheckpointFile {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            method: self.model.method(),
            config_hash: self.config_hash.clone(),
            activation,
            dims,
            tensors,
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        let t = TensorTable(&file.tensors);
        let d = file.dims;
        let act = file.activation;
        let model = match file.method {
            Method::D2v => {
                let task = TaskNetwork::from_layers(
                    t.layer("task.hidden", d.input_dim, d.task_hidden, act)?,
                    t.layer(
                        "task.projection",
                        d.task_hidden,
                        d.embedding_dim,
                        Activation::Identity,
                    )?,
                )?;
                let main = Mlp::from_layers(
                    t.layer(
                        "main.hidden",
                        d.input_dim + d.embedding_dim,
                        d.main_hidden,
                        act,
                    )?,
                    t.layer(
                        "main.output",
                        d.main_hidden,
                        d.num_classes,
                        Activation::Identity,
                    )?,
                )?;
                Model::D2v(D2VModel::from_parts(task, main)?)
            }
            Method::Baseline => Model::Baseline(Mlp::from_layers(
                t.layer("hidden", d.input_dim, d.main_hidden, act)?,
                t.layer("output", d.main_hidden, d.num_classes, Activation::Identity)?,
            )?),
        };
        Ok(Self {
            model,
            config_hash: file.config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
