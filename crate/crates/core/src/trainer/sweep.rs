//! Accuracy grid over (number of training domains × points per domain),
//! comparing the domain-embedding model with the pooling baseline on the
//! fixed synthetic test suite.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TaskBatch};
use super::metrics::{point_losses, summarize};
use super::train::{steps_per_epoch, train};
use crate::dataset::DomainDataset;
use crate::error::{Error, Result};
use crate::model::Method;
use crate::rng::{self, NS_SWEEP_REPEAT};
use crate::synth::{generate_suite, test_suite, SynthSpec};

pub const DEFAULT_DOMAIN_COUNTS: [usize; 6] = [8, 16, 32, 64, 128, 256];
pub const DEFAULT_EXAMPLE_COUNTS: [usize; 8] = [8, 16, 32, 64, 128, 256, 512, 1024];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub domain_counts: Vec<usize>,
    pub example_counts: Vec<usize>,
    pub seed: u64,
    /// Independent repetitions per cell; accuracies are averaged.
    pub trials_per_cell: usize,
    pub base: ExperimentConfig,
    /// When set, each cell trains for about this many optimizer steps instead
    /// of `base.epochs` epochs.
    pub step_budget: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            domain_counts: DEFAULT_DOMAIN_COUNTS.to_vec(),
            example_counts: DEFAULT_EXAMPLE_COUNTS.to_vec(),
            seed: 0,
            trials_per_cell: 1,
            base: ExperimentConfig::default(),
            step_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub domains: usize,
    pub examples: usize,
    pub d2v_accuracy: f64,
    pub baseline_accuracy: f64,
    pub d2v_runs: Vec<f64>,
    pub baseline_runs: Vec<f64>,
}

/// Training config for one cell and repetition: the main batch shrinks to the
/// domain size, a fixed task batch larger than the domain becomes the whole
/// domain, and the seed is derived from the repetition index.
pub fn cell_config(
    sweep: &SweepConfig,
    domains: usize,
    examples: usize,
    repeat: usize,
) -> ExperimentConfig {
    let mut c = sweep.base.clone();
    c.seed = rng::derive_seed(sweep.seed, NS_SWEEP_REPEAT, repeat as u64);
    c.main_batch = c.main_batch.min(examples);
    if let TaskBatch::Size(k) = c.task_batch {
        if k >= examples {
            c.task_batch = TaskBatch::All;
        }
    }
    if let Some(budget) = sweep.step_budget {
        let per_epoch = steps_per_epoch(Method::D2v, &vec![examples; domains], c.main_batch);
        c.epochs = budget.div_ceil(per_epoch).max(1);
    }
    c
}

/// Pooled test accuracy of one method trained on one cell.
pub fn run_cell(
    method: Method,
    config: &ExperimentConfig,
    domains: usize,
    examples: usize,
    test: &[DomainDataset],
) -> Result<f64> {
    let sources = generate_suite(&SynthSpec {
        num_domains: domains,
        examples_per_domain: examples,
        seed: config.seed,
    })?;
    let outcome = train(method, config, &sources, None)?;
    Ok(summarize(&point_losses(&outcome.model, test)?).pooled_accuracy)
}

pub fn heatmap_sweep(sweep: &SweepConfig) -> Result<Vec<CellResult>> {
    if sweep.trials_per_cell == 0 {
        return Err(Error::InvalidConfig("trials_per_cell: must be >= 1".into()));
    }
    if sweep.domain_counts.is_empty() || sweep.example_counts.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    if sweep.domain_counts.contains(&0) || sweep.example_counts.contains(&0) {
        return Err(Error::InvalidConfig("sweep counts must be positive".into()));
    }
    sweep.base.validate()?;
    let test = test_suite(sweep.seed);

    let mut jobs = Vec::new();
    for &d in &sweep.domain_counts {
        for &n in &sweep.example_counts {
            for r in 0..sweep.trials_per_cell {
                for m in [Method::D2v, Method::Baseline] {
                    jobs.push((d, n, r, m));
                }
            }
        }
    }
    let accs: Vec<f64> = jobs
        .par_iter()
        .map(|&(d, n, r, m)| run_cell(m, &cell_config(sweep, d, n, r), d, n, &test))
        .collect::<Result<_>>()?;

    let per_cell = 2 * sweep.trials_per_cell;
    let mut cells = Vec::new();
    for (chunk, jobs) in accs.chunks(per_cell).zip(jobs.chunks(per_cell)) {
        let d2v_runs: Vec<f64> = chunk.iter().step_by(2).copied().collect();
        let baseline_runs: Vec<f64> = chunk.iter().skip(1).step_by(2).copied().collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        cells.push(CellResult {
            domains: jobs[0].0,
            examples: jobs[0].1,
            d2v_accuracy: mean(&d2v_runs),
            baseline_accuracy: mean(&baseline_runs),
            d2v_runs,
            baseline_runs,
        });
    }
    Ok(cells)
}

/// `domains,examples,method,accuracy`, two rows per cell.
pub fn write_grid_csv<W: Write>(cells: &[CellResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["domains", "examples", "method", "accuracy"])
        .map_err(io)?;
    for c in cells {
        for (method, acc) in [
            (Method::D2v, c.d2v_accuracy),
            (Method::Baseline, c.baseline_accuracy),
        ] {
            w.write_record([
                c.domains.to_string(),
                c.examples.to_string(),
                method.to_string(),
                acc.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Row-major accuracy image (domains down, examples across) for one method.
pub fn grid_pgm(cells: &[CellResult], sweep: &SweepConfig, method: Method) -> Vec<u8> {
    let (h, w) = (sweep.domain_counts.len(), sweep.example_counts.len());
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for c in cells {
        let acc = match method {
            Method::D2v => c.d2v_accuracy,
            Method::Baseline => c.baseline_accuracy,
        };
        out.push((255.0 * acc.clamp(0.0, 1.0) + 0.5).floor() as u8);
    }
    out
}
