//! Empirical errors and accuracy.
//!
//! Train-form error averages each domain's mean loss over the domains;
//! test-form error is the mean loss over the points of the evaluated set.
//! Both are reported for cross-entropy and for the 0/1 loss (as accuracy).

use serde::{Deserialize, Serialize};

use crate::dataset::DomainSource;
use crate::error::{Error, Result};
use crate::model::DomainClassifier;
use crate::nn::argmax;
use crate::nn::loss::{check_labels, row_cross_entropy};

/// `(1/N) Σᵢ (1/nᵢ) Σⱼ ℓᵢⱼ` over per-domain loss lists.
pub fn empirical_train_error<L: AsRef<[f64]>>(per_domain: &[L]) -> f64 {
    let n = per_domain.len() as f64;
    per_domain
        .iter()
        .map(|l| empirical_test_error(l.as_ref()))
        .sum::<f64>()
        / n
}

/// `(1/n_T) Σⱼ ℓⱼ`
pub fn empirical_test_error(losses: &[f64]) -> f64 {
    losses.iter().sum::<f64>() / losses.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub domain_id: String,
    pub points: usize,
    pub cross_entropy: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_domain: Vec<DomainScore>,
    /// Train-form cross-entropy: mean over domains of per-domain means.
    pub domain_mean_error: f64,
    pub domain_mean_accuracy: f64,
    /// Test-form cross-entropy over all points pooled.
    pub pooled_error: f64,
    pub pooled_accuracy: f64,
}

/// Per-point losses of one domain.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PointLosses {
    pub cross_entropy: Vec<f64>,
    pub zero_one: Vec<f64>,
}

/// Scores each domain using an embedding of all of that domain's features.
/// Labels are read only after predictions are made.
pub(crate) fn point_losses<M, D>(model: &M, domains: &[D]) -> Result<Vec<PointLosses>>
where
    M: DomainClassifier,
    D: DomainSource,
{
    if domains.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    domains
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let features = d.features();
            let logits = model.domain_logits(features, features)?;
            let labels = d
                .labels()
                .ok_or_else(|| Error::Data(format!("domain #{k} has no labels to score")))?;
            if labels.len() != logits.rows() {
                return Err(Error::Data(format!("domain #{k}: label count mismatch")));
            }
            check_labels(labels, model.num_classes())?;
            let mut ce = Vec::with_capacity(labels.len());
            let mut zo = Vec::with_capacity(labels.len());
            for (row, &y) in logits.row_iter().zip(labels) {
                ce.push(row_cross_entropy(row, y));
                zo.push(if argmax(row) == y { 0.0 } else { 1.0 });
            }
            Ok(PointLosses {
                cross_entropy: ce,
                zero_one: zo,
            })
        })
        .collect()
}

pub(crate) struct Summary {
    pub domain_mean_error: f64,
    pub domain_mean_accuracy: f64,
    pub pooled_error: f64,
    pub pooled_accuracy: f64,
}

pub(crate) fn summarize(losses: &[PointLosses]) -> Summary {
    let ce: Vec<&[f64]> = losses.iter().map(|l| l.cross_entropy.as_slice()).collect();
    let zo: Vec<&[f64]> = losses.iter().map(|l| l.zero_one.as_slice()).collect();
    let pooled_ce: Vec<f64> = ce.iter().flat_map(|l| l.iter().copied()).collect();
    let pooled_zo: Vec<f64> = zo.iter().flat_map(|l| l.iter().copied()).collect();
    Summary {
        domain_mean_error: empirical_train_error(&ce),
        domain_mean_accuracy: 1.0 - empirical_train_error(&zo),
        pooled_error: empirical_test_error(&pooled_ce),
        pooled_accuracy: 1.0 - empirical_test_error(&pooled_zo),
    }
}

/// Full report with per-domain scores.
pub fn evaluate<M, D>(model: &M, domains: &[D]) -> Result<Evaluation>
where
    M: DomainClassifier,
    D: DomainSource,
{
    let losses = point_losses(model, domains)?;
    let s = summarize(&losses);
    let per_domain = domains
        .iter()
        .zip(&losses)
        .map(|(d, l)| DomainScore {
            domain_id: d.domain_id().to_string(),
            points: l.cross_entropy.len(),
            cross_entropy: empirical_test_error(&l.cross_entropy),
            accuracy: 1.0 - empirical_test_error(&l.zero_one),
        })
        .collect();
    Ok(Evaluation {
        per_domain,
        domain_mean_error: s.domain_mean_error,
        domain_mean_accuracy: s.domain_mean_accuracy,
        pooled_error: s.pooled_error,
        pooled_accuracy: s.pooled_accuracy,
    })
}

/// Class predictions per domain, each domain embedded from its own features.
pub fn predict_domains<M, D>(model: &M, domains: &[D]) -> Result<Vec<Vec<usize>>>
where
    M: DomainClassifier,
    D: DomainSource,
{
    domains
        .iter()
        .map(|d| model.domain_predict(d.features(), d.features()))
        .collect()
}

/// One line of a training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Train-form cross-entropy over the source domains.
    pub empirical_train_error: f64,
    pub train_accuracy: f64,
    /// Test-form cross-entropy over the monitored held-out domains, if any.
    pub empirical_test_error: Option<f64>,
    pub test_accuracy: Option<f64>,
}

impl MetricsRecord {
    pub(crate) fn measure<M, D>(
        epoch: usize,
        model: &M,
        sources: &[D],
        monitor: Option<&[D]>,
    ) -> Result<Self>
    where
        M: DomainClassifier,
        D: DomainSource,
    {
        let train = summarize(&point_losses(model, sources)?);
        let test = monitor
            .map(|m| point_losses(model, m).map(|l| summarize(&l)))
            .transpose()?;
        Ok(Self {
            epoch,
            empirical_train_error: train.domain_mean_error,
            train_accuracy: train.domain_mean_accuracy,
            empirical_test_error: test.as_ref().map(|t| t.pooled_error),
            test_accuracy: test.as_ref().map(|t| t.pooled_accuracy),
        })
    }
}

/// JSON-lines encoding, one record per line.
pub fn to_json_lines<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
