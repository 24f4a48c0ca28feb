use std::path::{Path, PathBuf};

use d2v_core::dataset::{save_csv, write_csv, DomainDataset, FeatureTable};
use d2v_core::model::{Checkpoint, DomainEmbedding, Method, Model};
use d2v_core::rng::{self, NS_RANDOM_SIMILARITY};
use d2v_core::similarity::{
    compare, estimated_similarity_with, known_similarity_with, random_similarity, theta_order,
    Agreement, Bandwidth, SimilarityMatrix,
};
use d2v_core::synth::{generate_suite, test_suite, SynthSpec};
use d2v_core::trainer::sweep::{grid_pgm, heatmap_sweep, write_grid_csv, SweepConfig};
use d2v_core::trainer::{
    evaluate, predict_domains, random_search, to_json_lines, train, ExperimentConfig, SearchSpace,
};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::inputs::{
    attach_thetas, from_value, load_data, load_optional_config, read_thetas, read_versioned,
    thetas_csv, TrainSettings, CONFIG_SCHEMA_VERSION, DATA_FILE, THETAS_FILE,
};
use crate::manifest::OutDir;
use crate::{Command, EvalArgs, GenSynthArgs, SearchArgs, SimilarityArgs, SweepArgs, TrainArgs};

pub fn dispatch(command: Command, argv: &[String]) -> CliResult<()> {
    match command {
        Command::GenSynth(a) => gen_synth(a, argv),
        Command::Train(a) => cmd_train(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
        Command::Sweep(a) => cmd_sweep(a, argv),
        Command::Search(a) => cmd_search(a, argv),
        Command::Similarity(a) => cmd_similarity(a, argv),
    }
}

#[derive(Serialize)]
struct GenSynthSettings {
    schema_version: u64,
    test_suite: bool,
    domains: usize,
    examples: usize,
    seed: u64,
}

fn gen_synth(a: GenSynthArgs, argv: &[String]) -> CliResult<()> {
    let domains = if a.test_suite {
        test_suite(a.seed)
    } else {
        generate_suite(&SynthSpec {
            num_domains: a.domains.expect("required by clap") as usize,
            examples_per_domain: a.examples.expect("required by clap") as usize,
            seed: a.seed,
        })?
    };
    let settings = GenSynthSettings {
        schema_version: CONFIG_SCHEMA_VERSION,
        test_suite: a.test_suite,
        domains: domains.len(),
        examples: domains.first().map_or(0, |d| d.len()),
        seed: a.seed,
    };
    let mut out = OutDir::prepare(&a.out.out, a.out.force)?;
    let mut buf = Vec::new();
    write_csv(&FeatureTable::from_domains(&domains)?, &mut buf)?;
    out.write(DATA_FILE, buf)?;
    out.write(THETAS_FILE, thetas_csv(&domains)?)?;
    out.finish("gen-synth", argv, &settings, Some(a.seed), Vec::new())?;
    Ok(())
}

fn cmd_train(a: TrainArgs, argv: &[String]) -> CliResult<()> {
    let (file_method, mut config) = load_optional_config(a.config.as_deref())?;
    a.overrides.apply(&mut config);
    let settings = TrainSettings::new(a.method.or(file_method).unwrap_or(Method::D2v), config);
    settings.config.validate()?;
    let data = load_data(&a.data)?;
    let monitor = a.eval_data.as_deref().map(load_data).transpose()?;
    let mut out = OutDir::prepare(&a.out.out, a.out.force)?;

    let outcome = train(
        settings.method,
        &settings.config,
        &data.domains,
        monitor.as_ref().map(|m| m.domains.as_slice()),
    )?;
    let hash = d2v_core::trainer::json_hash(&settings);
    out.write(
        "model.json",
        Checkpoint::new(outcome.model, hash).to_json()?,
    )?;
    out.write("metrics.jsonl", to_json_lines(&outcome.history)?)?;
    out.write_json("config.json", &settings)?;

    let mut inputs = vec![data.csv];
    inputs.extend(a.config);
    inputs.extend(monitor.map(|m| m.csv));
    out.finish("train", argv, &settings, Some(settings.config.seed), inputs)?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "model file {} does not exist",
            path.display()
        )));
    }
    Checkpoint::load(path).map_err(|e| match e {
        d2v_core::Error::Io(io) => CliError::Io(io),
        other => CliError::Usage(format!("{}: {other}", path.display())),
    })
}

#[derive(Serialize)]
struct CheckpointRef {
    schema_version: u64,
    model: PathBuf,
    model_config_hash: String,
}

fn predictions_csv(domains: &[DomainDataset], predictions: &[Vec<usize>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "index", "label", "prediction"])?;
    for (d, preds) in domains.iter().zip(predictions) {
        let labels = d.labels.as_deref().unwrap_or(&[]);
        for (i, p) in preds.iter().enumerate() {
            let label = labels.get(i).map(|l| l.to_string()).unwrap_or_default();
            w.write_record([d.domain_id.clone(), i.to_string(), label, p.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_eval(a: EvalArgs, argv: &[String]) -> CliResult<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    let mut out = OutDir::prepare(&a.out.out, a.out.force)?;
    let (evaluation, predictions) = match &ckpt.model {
        Model::D2v(m) => (
            evaluate(m, &data.domains)?,
            predict_domains(m, &data.domains)?,
        ),
        Model::Baseline(m) => (
            evaluate(m, &data.domains)?,
            predict_domains(m, &data.domains)?,
        ),
    };
    out.write_json("evaluation.json", &evaluation)?;
    out.write(
        "predictions.csv",
        predictions_csv(&data.domains, &predictions)?,
    )?;
    let settings = CheckpointRef {
        schema_version: CONFIG_SCHEMA_VERSION,
        model: a.model.clone(),
        model_config_hash: ckpt.config_hash.clone(),
    };
    out.finish("eval", argv, &settings, None, vec![a.model, data.csv])?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs, argv: &[String]) -> CliResult<()> {
    let (method, mut base) = load_optional_config(a.config.as_deref())?;
    if method.is_some() {
        return Err(CliError::Usage(
            "method: the sweep always trains both methods".into(),
        ));
    }
    a.overrides.apply(&mut base);
    let sweep = SweepConfig {
        domain_counts: a.domains,
        example_counts: a.examples,
        seed: base.seed,
        trials_per_cell: a.trials,
        base,
        step_budget: a.step_budget,
    };
    let mut out = OutDir::prepare(&a.out.out, a.out.force)?;
    let cells = heatmap_sweep(&sweep)?;
    let mut grid = Vec::new();
    write_grid_csv(&cells, &mut grid)?;
    out.write("grid.csv", grid)?;
    out.write_json("cells.json", &cells)?;
    out.write("d2v.pgm", grid_pgm(&cells, &sweep, Method::D2v))?;
    out.write("baseline.pgm", grid_pgm(&cells, &sweep, Method::Baseline))?;
    out.finish(
        "sweep",
        argv,
        &sweep,
        Some(sweep.seed),
        a.config.into_iter().collect(),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SearchSettings<'a> {
    schema_version: u64,
    method: Method,
    base: &'a ExperimentConfig,
    space: &'a SearchSpace,
}

fn cmd_search(a: SearchArgs, argv: &[String]) -> CliResult<()> {
    let space: SearchSpace = from_value(&a.space, read_versioned(&a.space, false)?)?;
    space.validate()?;
    let (file_method, mut base) = load_optional_config(a.config.as_deref())?;
    a.overrides.apply(&mut base);
    base.validate()?;
    let method = a.method.or(file_method).unwrap_or(Method::D2v);
    let data = load_data(&a.data)?;
    let validation = a.validation_data.as_deref().map(load_data).transpose()?;
    let mut out = OutDir::prepare(&a.out.out, a.out.force)?;

    let outcome = random_search(
        &space,
        &base,
        method,
        &data.domains,
        validation.as_ref().map(|v| v.domains.as_slice()),
    )?;
    out.write("trials.jsonl", to_json_lines(&outcome.trials)?)?;
    out.write_json(
        "best_config.json",
        &TrainSettings::new(method, outcome.best.clone()),
    )?;

    let settings = SearchSettings {
        schema_version: CONFIG_SCHEMA_VERSION,
        method,
        base: &base,
        space: &space,
    };
    let mut inputs = vec![a.space.clone(), data.csv];
    inputs.extend(a.config.clone());
    inputs.extend(validation.map(|v| v.csv));
    out.finish("search", argv, &settings, Some(base.seed), inputs)?;
    Ok(())
}

#[derive(Serialize)]
struct SimilaritySettings {
    schema_version: u64,
    model: PathBuf,
    model_config_hash: String,
    sigma: Option<f64>,
    random_seed: u64,
}

#[derive(Serialize)]
struct SimilarityReport {
    domains: usize,
    sigma_estimated: f64,
    sigma_known: Option<f64>,
    estimated_vs_known: Option<Agreement>,
    random_vs_known: Option<Agreement>,
}

fn matrix_csv(m: &SimilarityMatrix) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    m.write_csv(&mut buf)?;
    Ok(buf)
}

fn embeddings_csv(embeddings: &[DomainEmbedding]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    let mut header = vec!["domain".to_string()];
    header.extend((0..dim).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for e in embeddings {
        let mut row = vec![e.domain_id.clone()];
        row.extend(e.vector.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_similarity(a: SimilarityArgs, argv: &[String]) -> CliResult<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let Model::D2v(model) = &ckpt.model else {
        return Err(CliError::Usage(
            "similarity needs a d2v checkpoint; the baseline has no domain embeddings".into(),
        ));
    };
    let mut data = load_data(&a.data)?;
    let mut inputs = vec![a.model.clone(), data.csv.clone()];
    if let Some(path) = &a.thetas {
        attach_thetas(&mut data.domains, &read_thetas(path)?, path)?;
        inputs.push(path.clone());
    } else if let Some(path) = &data.thetas {
        inputs.push(path.clone());
    }
    let has_thetas = data.domains.iter().all(|d| d.theta.is_some());
    if has_thetas {
        let thetas: Vec<f64> = data
            .domains
            .iter()
            .map(|d| d.theta.expect("checked"))
            .collect();
        let order = theta_order(&thetas);
        data.domains = order.iter().map(|&i| data.domains[i].clone()).collect();
    }
    let mut out = OutDir::prepare(&a.out.out, a.out.force)?;

    let embeddings = data
        .domains
        .iter()
        .map(|d| model.embed_domain(&d.domain_id, &d.features))
        .collect::<d2v_core::Result<Vec<_>>>()?;
    let estimated = estimated_similarity_with(&embeddings, a.sigma)?;
    out.write("embeddings.csv", embeddings_csv(&embeddings)?)?;
    out.write("estimated.csv", matrix_csv(&estimated)?)?;
    out.write("estimated.pgm", estimated.to_pgm())?;

    let mut report = SimilarityReport {
        domains: embeddings.len(),
        sigma_estimated: estimated.sigma.expect("kernel matrix has a bandwidth"),
        sigma_known: None,
        estimated_vs_known: None,
        random_vs_known: None,
    };
    if has_thetas {
        let ids: Vec<String> = data.domains.iter().map(|d| d.domain_id.clone()).collect();
        let thetas: Vec<f64> = data
            .domains
            .iter()
            .map(|d| d.theta.expect("checked"))
            .collect();
        // with `auto`, angles and embeddings each get their own median bandwidth
        let known = known_similarity_with(&ids, &thetas, a.sigma)?;
        let random = random_similarity(&ids, &mut rng::stream(a.seed, NS_RANDOM_SIMILARITY, 0));
        out.write("known.csv", matrix_csv(&known)?)?;
        out.write("known.pgm", known.to_pgm())?;
        out.write("random.csv", matrix_csv(&random)?)?;
        out.write("random.pgm", random.to_pgm())?;
        report.sigma_known = known.sigma;
        report.estimated_vs_known = Some(compare(&estimated, &known)?);
        report.random_vs_known = Some(compare(&random, &known)?);
    }
    out.write_json("comparison.json", &report)?;

    let settings = SimilaritySettings {
        schema_version: CONFIG_SCHEMA_VERSION,
        model: a.model.clone(),
        model_config_hash: ckpt.config_hash.clone(),
        sigma: match a.sigma {
            Bandwidth::Fixed(s) => Some(s),
            Bandwidth::Median => None,
        },
        random_seed: a.seed,
    };
    out.finish("similarity", argv, &settings, Some(a.seed), inputs)?;
    Ok(())
}

/// Writes a dataset directory (`data.csv` plus `thetas.csv` when every domain has an angle).
pub fn save_dataset_dir(domains: &[DomainDataset], dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    save_csv(&FeatureTable::from_domains(domains)?, &dir.join(DATA_FILE))?;
    if domains.iter().all(|d| d.theta.is_some()) {
        std::fs::write(dir.join(THETAS_FILE), thetas_csv(domains)?)?;
    }
    Ok(())
}
