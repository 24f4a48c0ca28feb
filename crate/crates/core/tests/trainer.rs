//! Training loop, metrics, search and sweep behaviour.

use std::cell::Cell;

use d2v_core::dataset::{DomainDataset, DomainSource};
use d2v_core::model::{DomainClassifier, Method, Mlp, Model};
use d2v_core::nn::{Activation, DenseLayer, Matrix, Parameterized};
use d2v_core::synth::{generate_suite, SynthSpec};
use d2v_core::trainer::sweep::{cell_config, heatmap_sweep, write_grid_csv, SweepConfig};
use d2v_core::trainer::{
    empirical_test_error, empirical_train_error, evaluate, holdout_split, random_search, train,
    train_baseline, train_d2v, ExperimentConfig, LogRange, SearchSpace, TaskBatch,
};

fn suite(domains: usize, examples: usize, seed: u64) -> Vec<DomainDataset> {
    generate_suite(&SynthSpec {
        num_domains: domains,
        examples_per_domain: examples,
        seed,
    })
    .unwrap()
}

fn small_config(epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        epochs,
        task_hidden: 8,
        main_hidden: 8,
        embedding_dim: 4,
        main_batch: 16,
        lr: 5e-3,
        ..Default::default()
    }
}

#[test]
fn double_mean_fixture() {
    // two domains of three points
    let a = [0.1, 0.2, 0.3];
    let b = [1.0, 2.0, 6.0];
    let expected = ((0.1 + 0.2 + 0.3) / 3.0 + (1.0 + 2.0 + 6.0) / 3.0) / 2.0;
    assert!((empirical_train_error(&[&a[..], &b[..]]) - expected).abs() < 1e-12);
    assert!((empirical_test_error(&a) - 0.2).abs() < 1e-12);
    // unequal sizes separate the two forms
    let c = [4.0];
    assert!((empirical_train_error(&[&a[..], &c[..]]) - 2.1).abs() < 1e-12);
    assert!((empirical_test_error(&[0.1, 0.2, 0.3, 4.0]) - 1.15).abs() < 1e-12);
}

/// Logits are `[0, x₀]`, so each point's cross-entropy is
/// `ln(1 + eˣ) − x·[y = 1]`.
#[test]
fn evaluation_matches_hand_computed_losses() {
    let hidden = DenseLayer::new(
        Matrix::from_rows(&[[1.0], [0.0]]).unwrap(),
        vec![0.0],
        Activation::Identity,
    )
    .unwrap();
    let output = DenseLayer::new(
        Matrix::from_rows(&[[0.0, 1.0]]).unwrap(),
        vec![0.0, 0.0],
        Activation::Identity,
    )
    .unwrap();
    let mlp = Mlp::from_layers(hidden, output).unwrap();
    let xa = [0.0, 1.0, -2.0];
    let ya = [1, 0, 1];
    let xb = [3.0, -1.0, 0.5];
    let yb = [1, 1, 0];
    let dom = |id: &str, x: &[f64], y: &[usize]| {
        let rows: Vec<[f64; 2]> = x.iter().map(|&v| [v, 7.0]).collect();
        DomainDataset::new(id, Matrix::from_rows(&rows).unwrap(), Some(y.to_vec())).unwrap()
    };
    let ce = |x: f64, y: usize| (1.0 + x.exp()).ln() - if y == 1 { x } else { 0.0 };
    let la: Vec<f64> = xa.iter().zip(&ya).map(|(&x, &y)| ce(x, y)).collect();
    let lb: Vec<f64> = xb.iter().zip(&yb).map(|(&x, &y)| ce(x, y)).collect();
    let ev = evaluate(&mlp, &[dom("a", &xa, &ya), dom("b", &xb, &yb)]).unwrap();
    let train_form = (la.iter().sum::<f64>() / 3.0 + lb.iter().sum::<f64>() / 3.0) / 2.0;
    let test_form = (la.iter().sum::<f64>() + lb.iter().sum::<f64>()) / 6.0;
    assert!((ev.domain_mean_error - train_form).abs() < 1e-12);
    assert!((ev.pooled_error - test_form).abs() < 1e-12);
    // argmax of [0, x] is class 1 iff x > 0; a tie at x = 0 goes to class 0
    // a: predictions 0,1,0 vs 1,0,1 -> 0/3; b: 1,0,1 vs 1,1,0 -> 1/3
    assert!((ev.per_domain[0].accuracy - 0.0).abs() < 1e-12);
    assert!((ev.per_domain[1].accuracy - 1.0 / 3.0).abs() < 1e-12);
    assert!((ev.pooled_accuracy - 1.0 / 6.0).abs() < 1e-12);
}

#[test]
fn zero_epochs_records_only_the_initial_state() {
    let data = suite(3, 32, 1);
    let out = train_d2v(&small_config(0), &data, None).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.history[0].epoch, 0);
    assert!(out.history[0].empirical_test_error.is_none());
    let again = train_d2v(&small_config(0), &data, None).unwrap();
    assert_eq!(out.model.params(), again.model.params());
}

#[test]
fn training_is_deterministic() {
    let data = suite(4, 32, 2);
    let monitor = suite(2, 32, 3);
    for method in [Method::D2v, Method::Baseline] {
        let a = train(method, &small_config(3), &data, Some(&monitor)).unwrap();
        let b = train(method, &small_config(3), &data, Some(&monitor)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        assert_eq!(a.history.len(), 4);
        assert!(a.history.iter().all(|r| r.test_accuracy.is_some()));
    }
}

#[test]
fn d2v_learns_rotated_domains() {
    let data = suite(16, 64, 4);
    let out = train_d2v(&small_config(40), &data, None).unwrap();
    let first = &out.history[0];
    let last = out.history.last().unwrap();
    assert!(last.empirical_train_error < first.empirical_train_error);
    assert!(last.train_accuracy > 0.85, "{last:?}");
}

#[test]
fn fixed_task_batch_trains() {
    let data = suite(4, 64, 5);
    let config = ExperimentConfig {
        task_batch: TaskBatch::Size(32),
        ..small_config(2)
    };
    let out = train_d2v(&config, &data, None).unwrap();
    assert_eq!(out.history.len(), 3);
}

/// Counts how often the trainer asks a domain for its identifier.
struct Watched {
    inner: DomainDataset,
    id_reads: Cell<usize>,
}

impl DomainSource for Watched {
    fn domain_id(&self) -> &str {
        self.id_reads.set(self.id_reads.get() + 1);
        self.inner.domain_id()
    }
    fn features(&self) -> &Matrix {
        self.inner.features()
    }
    fn labels(&self) -> Option<&[usize]> {
        self.inner.labels()
    }
}

#[test]
fn baseline_never_reads_domain_identity() {
    let watched: Vec<Watched> = suite(5, 16, 6)
        .into_iter()
        .map(|inner| Watched {
            inner,
            id_reads: Cell::new(0),
        })
        .collect();
    let out = train_baseline(&small_config(3), &watched, Some(&watched)).unwrap();
    assert_eq!(watched.iter().map(|w| w.id_reads.get()).sum::<usize>(), 0);
    // and its predictions ignore the domain sample entirely
    let d = &watched[0].inner;
    let other = &watched[1].inner;
    assert_eq!(
        out.model
            .domain_predict(d.features(), d.features())
            .unwrap(),
        out.model
            .domain_predict(d.features(), other.features())
            .unwrap()
    );
}

#[test]
fn mismatched_sources_are_rejected() {
    let mut data = suite(2, 16, 7);
    data[1].labels = None;
    assert!(train_d2v(&small_config(1), &data, None).is_err());
    let too_big = ExperimentConfig {
        main_batch: 17,
        ..small_config(1)
    };
    assert!(train_d2v(&too_big, &suite(2, 16, 7), None)
        .unwrap_err()
        .is_validation());
}

#[test]
fn holdout_keeps_a_fifth() {
    let data = suite(10, 4, 8);
    let (train_part, val) = holdout_split(&data, 0).unwrap();
    assert_eq!(val.len(), 2);
    assert_eq!(train_part.len(), 8);
    let (_, val_again) = holdout_split(&data, 0).unwrap();
    assert_eq!(val, val_again);
    assert!(holdout_split(&data[..1], 0).is_err());
}

#[test]
fn random_search_picks_the_best_trial() {
    let data = suite(6, 32, 9);
    let val = suite(8, 32, 10)[6..].to_vec();
    let space = SearchSpace {
        lr: LogRange { lo: 1e-4, hi: 3e-2 },
        weight_decay: LogRange::fixed(0.0),
        task_hidden: vec![4, 8],
        main_hidden: vec![8],
        embedding_dim: Some(vec![2, 4]),
        trials: 5,
    };
    let base = small_config(3);
    let out = random_search(&space, &base, Method::D2v, &data, Some(&val)).unwrap();
    assert_eq!(out.trials.len(), 5);
    let best = out
        .trials
        .iter()
        .map(|t| t.validation_accuracy)
        .fold(f64::MIN, f64::max);
    assert_eq!(out.trials[out.best_trial].validation_accuracy, best);
    assert!(out.trials[..out.best_trial]
        .iter()
        .all(|t| t.validation_accuracy < best));
    for t in &out.trials {
        assert!((1e-4..=3e-2).contains(&t.config.lr));
        assert_eq!(t.config.seed, base.seed);
    }
    // sampled configs depend only on the trial index
    let again = random_search(&space, &base, Method::D2v, &data, Some(&val)).unwrap();
    assert_eq!(out.trials, again.trials);
    // overlapping validation domains are refused
    assert!(random_search(&space, &base, Method::D2v, &data, Some(&data[..1])).is_err());
}

#[test]
fn sweep_cells_and_grid() {
    let sweep = SweepConfig {
        domain_counts: vec![2, 4],
        example_counts: vec![8, 16],
        seed: 3,
        trials_per_cell: 2,
        base: ExperimentConfig {
            epochs: 1,
            ..small_config(1)
        },
        step_budget: None,
    };
    let c = cell_config(&sweep, 2, 8, 0);
    assert_eq!(c.main_batch, 8);
    assert_ne!(
        cell_config(&sweep, 2, 8, 0).seed,
        cell_config(&sweep, 2, 8, 1).seed
    );
    let cells = heatmap_sweep(&sweep).unwrap();
    assert_eq!(cells.len(), 4);
    for cell in &cells {
        assert_eq!(cell.d2v_runs.len(), 2);
        let mean = cell.d2v_runs.iter().sum::<f64>() / 2.0;
        assert!((cell.d2v_accuracy - mean).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&cell.baseline_accuracy));
    }
    let mut buf = Vec::new();
    write_grid_csv(&cells, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 8);
    assert_eq!(
        text.lines().next().unwrap(),
        "domains,examples,method,accuracy"
    );
    assert_eq!(heatmap_sweep(&sweep).unwrap(), cells);
}

#[test]
fn unified_train_dispatches_on_method() {
    let data = suite(2, 16, 11);
    assert!(matches!(
        train(Method::D2v, &small_config(1), &data, None)
            .unwrap()
            .model,
        Model::D2v(_)
    ));
    assert!(matches!(
        train(Method::Baseline, &small_config(1), &data, None)
            .unwrap()
            .model,
        Model::Baseline(_)
    ));
}
