//! Training loops.
//!
//! The domain-embedding model is trained with two batches per iteration, both
//! drawn from the same domain: a small labeled batch for the main network and
//! a large unlabeled batch (by default the whole domain) for the task network.
//! Domains are visited round-robin in an order reshuffled every epoch; an
//! epoch ends once every labeled point has been used once.
//!
//! The pooling baseline shuffles the union of all source points and never
//! consults domain identity.

use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, TaskBatch};
use super::metrics::MetricsRecord;
use crate::dataset::DomainSource;
use crate::error::{Error, Result};
use crate::model::{D2VDims, D2VModel, Method, Mlp, Model};
use crate::nn::{Adam, Gradients, Matrix};
use crate::rng::{self, NS_MODEL_INIT, NS_TRAIN_ORDER};

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub history: Vec<MetricsRecord>,
}

fn check_sources<D: DomainSource>(
    config: &ExperimentConfig,
    sources: &[D],
) -> Result<(usize, usize)> {
    if sources.is_empty() {
        return Err(Error::Data(
            "training needs at least one source domain".into(),
        ));
    }
    config.validate_for(sources)?;
    let dim = sources[0].features().cols();
    let mut max_label = 0;
    for (k, d) in sources.iter().enumerate() {
        if d.features().cols() != dim {
            return Err(Error::Dimension(format!(
                "source #{k} has {} features, source #0 has {dim}",
                d.features().cols()
            )));
        }
        let labels = d
            .labels()
            .ok_or_else(|| Error::Data(format!("source #{k} has no labels")))?;
        if labels.len() != d.features().rows() {
            return Err(Error::Data(format!("source #{k}: label count mismatch")));
        }
        max_label = max_label.max(labels.iter().copied().max().unwrap_or(0));
    }
    if dim == 0 {
        return Err(Error::Dimension("sources have no features".into()));
    }
    Ok((dim, (max_label + 1).max(2)))
}

/// Number of optimizer steps in one epoch over domains of the given sizes.
pub fn steps_per_epoch(method: Method, domain_sizes: &[usize], main_batch: usize) -> usize {
    match method {
        Method::D2v => domain_sizes.iter().map(|n| n.div_ceil(main_batch)).sum(),
        Method::Baseline => domain_sizes.iter().sum::<usize>().div_ceil(main_batch),
    }
}

fn ensure_finite(loss: f64, grads: &Gradients, epoch: usize) -> Result<()> {
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite(format!(
            "training diverged in epoch {epoch}"
        )));
    }
    Ok(())
}

/// Trains the domain-embedding model. `monitor` domains, when given, are
/// evaluated after every epoch but never trained on.
pub fn train_d2v<D: DomainSource>(
    config: &ExperimentConfig,
    sources: &[D],
    monitor: Option<&[D]>,
) -> Result<TrainOutcome<D2VModel>> {
    let (input_dim, num_classes) = check_sources(config, sources)?;
    let dims = D2VDims {
        input_dim,
        task_hidden: config.task_hidden,
        embedding_dim: config.embedding_dim,
        main_hidden: config.main_hidden,
        num_classes,
    };
    let mut model = D2VModel::new(
        dims,
        config.activation,
        &mut rng::stream(config.seed, NS_MODEL_INIT, 0),
    );
    let mut opt = Adam::new(&model, config.lr, config.weight_decay);
    let mut order_rng = rng::stream(config.seed, NS_TRAIN_ORDER, 0);
    let mut history = vec![MetricsRecord::measure(0, &model, sources, monitor)?];

    let batch = config.main_batch;
    for epoch in 1..=config.epochs {
        let mut domain_order: Vec<usize> = (0..sources.len()).collect();
        domain_order.shuffle(&mut order_rng);
        let point_orders: Vec<Vec<usize>> = sources
            .iter()
            .map(|d| {
                let mut idx: Vec<usize> = (0..d.features().rows()).collect();
                idx.shuffle(&mut order_rng);
                idx
            })
            .collect();
        let mut cursor = vec![0usize; sources.len()];
        let rounds = sources
            .iter()
            .map(|d| d.features().rows().div_ceil(batch))
            .max()
            .unwrap_or(0);

        for _ in 0..rounds {
            for &k in &domain_order {
                let domain = &sources[k];
                let n = domain.features().rows();
                if cursor[k] >= n {
                    continue;
                }
                let end = (cursor[k] + batch).min(n);
                let picked = &point_orders[k][cursor[k]..end];
                cursor[k] = end;
                let points = domain.features().select_rows(picked);
                let all_labels = domain.labels().expect("checked");
                let labels: Vec<usize> = picked.iter().map(|&i| all_labels[i]).collect();

                let task_sample = task_sample(domain.features(), config.task_batch, &mut order_rng);
                let sample = task_sample.as_ref().unwrap_or(domain.features());
                let (loss, grads) = model.backward(&points, sample, &labels)?;
                ensure_finite(loss.loss, &grads, epoch)?;
                opt.step(&mut model, &grads)?;
            }
        }
        history.push(MetricsRecord::measure(epoch, &model, sources, monitor)?);
    }
    Ok(TrainOutcome { model, history })
}

/// `None` means use the full domain.
fn task_sample(features: &Matrix, task_batch: TaskBatch, rng: &mut ChaCha8Rng) -> Option<Matrix> {
    match task_batch {
        TaskBatch::Size(k) if k < features.rows() => {
            let mut picked = index::sample(rng, features.rows(), k).into_vec();
            picked.sort_unstable();
            Some(features.select_rows(&picked))
        }
        _ => None,
    }
}

/// Trains the pooling baseline on the union of all source points. Only
/// `features` and `labels` of each source are read.
pub fn train_baseline<D: DomainSource>(
    config: &ExperimentConfig,
    sources: &[D],
    monitor: Option<&[D]>,
) -> Result<TrainOutcome<Mlp>> {
    let (input_dim, num_classes) = check_sources(config, sources)?;
    let parts: Vec<&Matrix> = sources.iter().map(|d| d.features()).collect();
    let pooled = Matrix::vstack(&parts)?;
    let pooled_labels: Vec<usize> = sources
        .iter()
        .flat_map(|d| d.labels().expect("checked").iter().copied())
        .collect();

    let mut model = Mlp::new(
        input_dim,
        config.main_hidden,
        num_classes,
        config.activation,
        &mut rng::stream(config.seed, NS_MODEL_INIT, 0),
    );
    let mut opt = Adam::new(&model, config.lr, config.weight_decay);
    let mut order_rng = rng::stream(config.seed, NS_TRAIN_ORDER, 0);
    let mut history = vec![MetricsRecord::measure(0, &model, sources, monitor)?];

    let mut order: Vec<usize> = (0..pooled.rows()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        for picked in order.chunks(config.main_batch) {
            let points = pooled.select_rows(picked);
            let labels: Vec<usize> = picked.iter().map(|&i| pooled_labels[i]).collect();
            let (loss, grads) = model.loss_and_grads(&points, &labels, None)?;
            ensure_finite(loss.loss, &grads, epoch)?;
            opt.step(&mut model, &grads)?;
        }
        history.push(MetricsRecord::measure(epoch, &model, sources, monitor)?);
    }
    Ok(TrainOutcome { model, history })
}

pub fn train<D: DomainSource>(
    method: Method,
    config: &ExperimentConfig,
    sources: &[D],
    monitor: Option<&[D]>,
) -> Result<TrainOutcome<Model>> {
    Ok(match method {
        Method::D2v => {
            let o = train_d2v(config, sources, monitor)?;
            TrainOutcome {
                model: Model::D2v(o.model),
                history: o.history,
            }
        }
        Method::Baseline => {
            let o = train_baseline(config, sources, monitor)?;
            TrainOutcome {
                model: Model::Baseline(o.model),
                history: o.history,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DomainDataset;
    use rand::{Rng, SeedableRng};

    fn separable(n: usize, seed: u64) -> DomainDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let labels = rows
            .iter()
            .map(|p| usize::from(p[0] + p[1] > 0.0))
            .collect();
        DomainDataset::new("only", Matrix::from_rows(&rows).unwrap(), Some(labels)).unwrap()
    }

    #[test]
    fn full_batch_loss_does_not_increase_early() {
        let d = separable(40, 1);
        let config = ExperimentConfig {
            main_batch: 40,
            epochs: 5,
            lr: 1e-2,
            ..Default::default()
        };
        let out = train_d2v(&config, std::slice::from_ref(&d), None).unwrap();
        for w in out.history.windows(2) {
            assert!(
                w[1].empirical_train_error <= w[0].empirical_train_error,
                "{:?}",
                out.history
            );
        }
    }

    #[test]
    fn step_counts() {
        assert_eq!(steps_per_epoch(Method::D2v, &[10, 5], 4), 3 + 2);
        assert_eq!(steps_per_epoch(Method::Baseline, &[10, 5], 4), 4);
    }

    #[test]
    fn task_sample_sizes() {
        let m = Matrix::zeros(10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(task_sample(&m, TaskBatch::All, &mut rng).is_none());
        assert!(task_sample(&m, TaskBatch::Size(10), &mut rng).is_none());
        assert_eq!(
            task_sample(&m, TaskBatch::Size(4), &mut rng)
                .unwrap()
                .rows(),
            4
        );
    }

    #[test]
    fn classes_follow_the_largest_label() {
        let mut d = separable(8, 2);
        d.labels = Some(vec![0, 1, 2, 0, 1, 2, 0, 4]);
        let config = ExperimentConfig {
            main_batch: 4,
            epochs: 0,
            ..Default::default()
        };
        let out = train_d2v(&config, std::slice::from_ref(&d), None).unwrap();
        assert_eq!(out.model.dims().num_classes, 5);
    }

    #[test]
    fn feature_dims_must_agree() {
        let a = separable(8, 3);
        let b = DomainDataset::new("wide", Matrix::zeros(8, 3), Some(vec![0; 8])).unwrap();
        let config = ExperimentConfig {
            main_batch: 4,
            ..Default::default()
        };
        assert!(matches!(
            train_d2v(&config, &[a, b], None),
            Err(Error::Dimension(_))
        ));
        assert!(train_d2v::<DomainDataset>(&config, &[], None).is_err());
    }
}
