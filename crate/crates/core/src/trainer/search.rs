//! Random hyperparameter search scored on held-out domains.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{point_losses, summarize};
use super::train::train;
use crate::dataset::DomainSource;
use crate::error::{Error, Result};
use crate::model::Method;
use crate::rng::{self, NS_HOLDOUT, NS_SEARCH_TRIAL};

/// Log-uniform range `[lo, hi]`. `lo == hi` pins the value (zero allowed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRange {
    pub lo: f64,
    pub hi: f64,
}

impl LogRange {
    pub fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let ok = if self.lo == self.hi {
            self.lo >= 0.0 && self.lo.is_finite()
        } else {
            self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "{field}: range [{}, {}] must satisfy 0 < lo < hi, or lo == hi",
                self.lo, self.hi
            )))
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            return self.lo;
        }
        rng.gen_range(self.lo.ln()..=self.hi.ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub lr: LogRange,
    pub weight_decay: LogRange,
    pub task_hidden: Vec<usize>,
    pub main_hidden: Vec<usize>,
    /// Defaults to the base config's embedding size when absent.
    #[serde(default)]
    pub embedding_dim: Option<Vec<usize>>,
    pub trials: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            lr: LogRange { lo: 1e-4, hi: 1e-2 },
            weight_decay: LogRange { lo: 1e-6, hi: 1e-2 },
            task_hidden: vec![8, 16, 32, 64],
            main_hidden: vec![8, 16, 32, 64],
            embedding_dim: None,
            trials: 20,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials: must be >= 1".into()));
        }
        self.lr.validate("lr")?;
        self.weight_decay.validate("weight_decay")?;
        let nonempty = |name: &str, v: &[usize]| {
            if v.is_empty() || v.contains(&0) {
                Err(Error::InvalidConfig(format!(
                    "{name}: needs at least one positive choice"
                )))
            } else {
                Ok(())
            }
        };
        nonempty("task_hidden", &self.task_hidden)?;
        nonempty("main_hidden", &self.main_hidden)?;
        if let Some(e) = &self.embedding_dim {
            if e.is_empty() {
                return Err(Error::InvalidConfig(
                    "embedding_dim: needs at least one choice".into(),
                ));
            }
        }
        Ok(())
    }

    /// Config for trial `trial`. Only the searched fields change; the
    /// training seed stays the base seed so trials differ only in their
    /// hyperparameters.
    pub fn sample(&self, base: &ExperimentConfig, trial: usize) -> ExperimentConfig {
        let mut r = rng::stream(base.seed, NS_SEARCH_TRIAL, trial as u64);
        let mut c = base.clone();
        c.lr = self.lr.sample(&mut r);
        c.weight_decay = self.weight_decay.sample(&mut r);
        c.task_hidden = *self.task_hidden.choose(&mut r).expect("validated");
        c.main_hidden = *self.main_hidden.choose(&mut r).expect("validated");
        if let Some(e) = &self.embedding_dim {
            c.embedding_dim = *e.choose(&mut r).expect("validated");
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub config: ExperimentConfig,
    pub validation_accuracy: f64,
    pub validation_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: ExperimentConfig,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

/// Splits off 20% of the domains (at least one) for validation; the rest
/// train. Both parts keep their original relative order.
pub fn holdout_split<D: DomainSource + Clone>(
    domains: &[D],
    seed: u64,
) -> Result<(Vec<D>, Vec<D>)> {
    if domains.len() < 2 {
        return Err(Error::Data(
            "holding out validation domains needs at least 2 source domains".into(),
        ));
    }
    let held = (domains.len() / 5).max(1);
    let mut idx: Vec<usize> = (0..domains.len()).collect();
    idx.shuffle(&mut rng::stream(seed, NS_HOLDOUT, 0));
    let mut is_held = vec![false; domains.len()];
    for &i in &idx[..held] {
        is_held[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, d) in domains.iter().enumerate() {
        if is_held[i] {
            val.push(d.clone());
        } else {
            train.push(d.clone());
        }
    }
    Ok((train, val))
}

/// Trains one model per sampled config and keeps the one with the best
/// pooled validation accuracy; ties go to the earliest trial.
pub fn random_search<D: DomainSource + Clone + Sync>(
    space: &SearchSpace,
    base: &ExperimentConfig,
    method: Method,
    sources: &[D],
    validation: Option<&[D]>,
) -> Result<SearchOutcome> {
    space.validate()?;
    let (train_set, val_set) = match validation {
        Some(v) => {
            let source_ids: HashSet<&str> = sources.iter().map(|d| d.domain_id()).collect();
            if let Some(dup) = v.iter().find(|d| source_ids.contains(d.domain_id())) {
                return Err(Error::Data(format!(
                    "validation domain {} is also a source domain",
                    dup.domain_id()
                )));
            }
            (sources.to_vec(), v.to_vec())
        }
        None => holdout_split(sources, base.seed)?,
    };

    let configs: Vec<ExperimentConfig> = (0..space.trials).map(|t| space.sample(base, t)).collect();
    for c in &configs {
        c.validate_for(&train_set)?;
    }
    let trials: Vec<TrialRecord> = configs
        .into_par_iter()
        .enumerate()
        .map(|(trial, config)| {
            let outcome = train(method, &config, &train_set, None)?;
            let s = summarize(&point_losses(&outcome.model, &val_set)?);
            Ok(TrialRecord {
                trial,
                config,
                validation_accuracy: s.pooled_accuracy,
                validation_error: s.pooled_error,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.validation_accuracy > trials[best].validation_accuracy {
            best = i;
        }
    }
    Ok(SearchOutcome {
        best: trials[best].config.clone(),
        best_trial: best,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_suite, SynthSpec};

    fn data(n: usize, seed: u64) -> Vec<crate::dataset::DomainDataset> {
        generate_suite(&SynthSpec {
            num_domains: n,
            examples_per_domain: 16,
            seed,
        })
        .unwrap()
    }

    fn point_space(trials: usize) -> SearchSpace {
        SearchSpace {
            lr: LogRange::fixed(3e-3),
            weight_decay: LogRange::fixed(1e-4),
            task_hidden: vec![4],
            main_hidden: vec![4],
            embedding_dim: None,
            trials,
        }
    }

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            epochs: 1,
            main_batch: 8,
            ..Default::default()
        }
    }

    #[test]
    fn collapsed_space_ties_to_trial_zero() {
        let out = random_search(&point_space(3), &base(), Method::D2v, &data(5, 1), None).unwrap();
        assert_eq!(out.best_trial, 0);
        assert!(out.trials.iter().all(|t| t.config == out.trials[0].config));
        assert!(out
            .trials
            .iter()
            .all(|t| t.validation_accuracy == out.trials[0].validation_accuracy));
    }

    #[test]
    fn single_trial_is_returned() {
        let out = random_search(
            &point_space(1),
            &base(),
            Method::Baseline,
            &data(5, 2),
            None,
        )
        .unwrap();
        assert_eq!(out.trials.len(), 1);
        assert_eq!(out.best, out.trials[0].config);
    }

    #[test]
    fn log_uniform_samples_stay_in_range() {
        let space = SearchSpace::default();
        let mut logs = Vec::new();
        for t in 0..200 {
            let c = space.sample(&base(), t);
            assert!((1e-4..=1e-2).contains(&c.lr));
            assert!(space.task_hidden.contains(&c.task_hidden));
            logs.push(c.lr.log10());
        }
        // log-uniform on [-4, -2] has mean -3
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        assert!((mean + 3.0).abs() < 0.15, "{mean}");
    }

    #[test]
    fn invalid_spaces_are_named() {
        let mut s = point_space(0);
        assert!(s.validate().unwrap_err().to_string().contains("trials"));
        s.trials = 1;
        s.lr = LogRange { lo: 1e-2, hi: 1e-3 };
        assert!(s.validate().unwrap_err().to_string().contains("lr"));
        s.lr = LogRange::fixed(1e-3);
        s.main_hidden.clear();
        assert!(s
            .validate()
            .unwrap_err()
            .to_string()
            .contains("main_hidden"));
    }
}
