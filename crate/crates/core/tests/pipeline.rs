//! File round trips through the whole library: CSV in, training, checkpoint
//! out and back, evaluation.

use d2v_core::dataset::{load_csv, lodo_splits, save_csv, FeatureTable};
use d2v_core::model::{Checkpoint, Method, Model};
use d2v_core::synth::{generate_suite, SynthSpec};
use d2v_core::trainer::{evaluate, predict_domains, train, ExperimentConfig};

#[test]
fn csv_to_checkpoint_to_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let domains = generate_suite(&SynthSpec {
        num_domains: 4,
        examples_per_domain: 32,
        seed: 12,
    })
    .unwrap();
    let csv = dir.path().join("data.csv");
    save_csv(&FeatureTable::from_domains(&domains).unwrap(), &csv).unwrap();
    let table = load_csv(&csv).unwrap();
    let splits = lodo_splits(&table).unwrap();
    assert_eq!(splits.len(), 4);

    let config = ExperimentConfig {
        epochs: 2,
        main_batch: 16,
        ..Default::default()
    };
    for method in [Method::D2v, Method::Baseline] {
        let split = &splits[1];
        let model = train(method, &config, &split.sources, None).unwrap().model;
        let path = dir.path().join(format!("{method}.json"));
        Checkpoint::new(model.clone(), config.hash())
            .save(&path)
            .unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.model, model);
        assert_eq!(loaded.config_hash, config.hash());
        let target = std::slice::from_ref(&split.target);
        match (&model, &loaded.model) {
            (Model::D2v(a), Model::D2v(b)) => {
                assert_eq!(evaluate(a, target).unwrap(), evaluate(b, target).unwrap());
                assert_eq!(
                    predict_domains(a, target).unwrap(),
                    predict_domains(b, target).unwrap()
                );
            }
            (Model::Baseline(a), Model::Baseline(b)) => {
                assert_eq!(evaluate(a, target).unwrap(), evaluate(b, target).unwrap());
            }
            _ => panic!("method changed across save/load"),
        }
    }
}

#[test]
fn loading_the_csv_keeps_values_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let domains = generate_suite(&SynthSpec {
        num_domains: 3,
        examples_per_domain: 50,
        seed: 13,
    })
    .unwrap();
    let table = FeatureTable::from_domains(&domains).unwrap();
    let csv = dir.path().join("d.csv");
    save_csv(&table, &csv).unwrap();
    let back = load_csv(&csv).unwrap();
    assert_eq!(back, table);
    let restored = back.domains();
    for (a, b) in restored.iter().zip(&domains) {
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
    }
}
