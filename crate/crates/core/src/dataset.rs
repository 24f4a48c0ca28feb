//! Domain datasets, the CSV ingestion format and leave-one-domain-out splits.
//!
//! CSV layout: a header `domain,label,f0,...,f{d-1}` followed by one row per
//! point. UTF-8, comma separated, `.` as decimal separator. Labels are
//! non-negative class indices.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: String,
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    /// Rotation angle, present for generated domains.
    pub theta: Option<f64>,
}

/// Read access used by the trainers. Counting calls to `domain_id` is how
/// tests confirm the pooling baseline never looks at domain identity.
pub trait DomainSource {
    fn domain_id(&self) -> &str;
    fn features(&self) -> &Matrix;
    fn labels(&self) -> Option<&[usize]>;
}

impl DomainSource for DomainDataset {
    fn domain_id(&self) -> &str {
        &self.domain_id
    }

    fn features(&self) -> &Matrix {
        &self.features
    }

    fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }
}

impl DomainDataset {
    pub fn new(
        domain_id: impl Into<String>,
        features: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let domain_id = domain_id.into();
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::Data(format!(
                    "domain {domain_id}: {} labels for {} points",
                    l.len(),
                    features.rows()
                )));
            }
        }
        Ok(Self {
            domain_id,
            features,
            labels,
            theta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Copy without labels.
    pub fn unlabeled(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }
}

/// Rows parsed from a feature CSV, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub domain_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub features: Matrix,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Distinct domain ids with their row indices, in order of first appearance.
    pub fn domain_rows(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<(String, Vec<usize>)> = Vec::new();
        let mut slot: HashMap<&str, usize> = HashMap::new();
        for (i, id) in self.domain_ids.iter().enumerate() {
            let k = *slot.entry(id.as_str()).or_insert_with(|| {
                order.push((id.clone(), Vec::new()));
                order.len() - 1
            });
            order[k].1.push(i);
        }
        order
    }

    /// One labeled dataset per domain, in order of first appearance.
    pub fn domains(&self) -> Vec<DomainDataset> {
        self.domain_rows()
            .into_iter()
            .map(|(id, rows)| DomainDataset {
                domain_id: id,
                features: self.features.select_rows(&rows),
                labels: Some(rows.iter().map(|&r| self.labels[r]).collect()),
                theta: None,
            })
            .collect()
    }

    pub fn from_domains(domains: &[DomainDataset]) -> Result<Self> {
        let dim = domains.first().map_or(0, DomainDataset::dim);
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut parts = Vec::new();
        for d in domains {
            if d.dim() != dim {
                return Err(Error::Data(format!(
                    "domain {} has {} features, expected {dim}",
                    d.domain_id,
                    d.dim()
                )));
            }
            let l = d.labels.as_ref().ok_or_else(|| {
                Error::Data(format!("domain {} has no labels to write", d.domain_id))
            })?;
            ids.extend(std::iter::repeat_n(d.domain_id.clone(), d.len()));
            labels.extend_from_slice(l);
            parts.push(&d.features);
        }
        let features = if parts.is_empty() {
            Matrix::zeros(0, 0)
        } else {
            Matrix::vstack(&parts)?
        };
        Ok(Self {
            domain_ids: ids,
            labels,
            features,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(Error::Csv {
                line: 1,
                message: "missing header row".into(),
            })
        }
    };
    if header.len() < 3 || &header[0] != "domain" || &header[1] != "label" {
        return Err(Error::Csv {
            line: 1,
            message: format!(
                "unknown header `{}`, expected domain,label,f0,...",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let dim = header.len() - 2;
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{k}") {
            return Err(Error::Csv {
                line: 1,
                message: format!(
                    "unknown header column `{name}` at position {}, expected `f{k}`",
                    k + 2
                ),
            });
        }
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim + 2 {
            return Err(Error::Csv {
                line,
                message: format!("expected {} fields, found {}", dim + 2, rec.len()),
            });
        }
        ids.push(rec[0].to_string());
        let label = rec[1].parse::<usize>().map_err(|_| Error::Csv {
            line,
            message: format!("column 2 (label): `{}` is not a class index", &rec[1]),
        })?;
        labels.push(label);
        for (k, field) in rec.iter().skip(2).enumerate() {
            let v = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Csv {
                    line,
                    message: format!("column {} (f{k}): `{field}` is not a finite number", k + 3),
                })?;
            data.push(v);
        }
    }
    let rows = labels.len();
    Ok(FeatureTable {
        domain_ids: ids,
        labels,
        features: Matrix::from_vec(rows, dim, data)?,
    })
}

pub fn load_csv(path: &Path) -> Result<FeatureTable> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file)
}

pub fn write_csv<W: Write>(table: &FeatureTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["domain".to_string(), "label".to_string()];
    header.extend((0..table.dim()).map(|k| format!("f{k}")));
    w.write_record(&header).map_err(csv_error)?;
    let mut rec: Vec<String> = Vec::with_capacity(table.dim() + 2);
    for i in 0..table.len() {
        rec.clear();
        rec.push(table.domain_ids[i].clone());
        rec.push(table.labels[i].to_string());
        rec.extend(table.features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(table: &FeatureTable, path: &Path) -> Result<()> {
    write_csv(table, File::create(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LodoSplit {
    pub sources: Vec<DomainDataset>,
    /// Held-out domain; its labels are used for scoring only.
    pub target: DomainDataset,
}

/// One split per domain: that domain is the target, every other domain a source.
pub fn lodo_splits(table: &FeatureTable) -> Result<Vec<LodoSplit>> {
    let domains = table.domains();
    if domains.len() < 2 {
        return Err(Error::Data(format!(
            "leave-one-domain-out needs at least 2 domains, found {}",
            domains.len()
        )));
    }
    Ok((0..domains.len())
        .map(|t| LodoSplit {
            target: domains[t].clone(),
            sources: domains
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != t)
                .map(|(_, d)| d.clone())
                .collect(),
        })
        .collect())
}
