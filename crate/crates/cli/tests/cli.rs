//! End-to-end runs of the `d2v` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use d2v_cli::RunManifest;
use d2v_core::model::Checkpoint;
use d2v_core::trainer::{json_hash, MetricsRecord};
use tempfile::tempdir;

fn d2v(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_d2v"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = d2v(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gen_synth_writes_rows_and_is_deterministic() {
    let tmp = tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&[
        "gen-synth",
        "--domains",
        "2",
        "--examples",
        "8",
        "--seed",
        "5",
        "--out",
        path(&a),
    ]);
    ok(&[
        "gen-synth",
        "--domains",
        "2",
        "--examples",
        "8",
        "--seed",
        "5",
        "--out",
        path(&b),
    ]);
    let csv = fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 16);
    assert!(csv.starts_with("domain,label,f0,f1\n"));
    assert_eq!(csv, fs::read_to_string(b.join("data.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("thetas.csv")).unwrap(),
        fs::read(b.join("thetas.csv")).unwrap()
    );
    let m = manifest(&a);
    assert_eq!(m.command, "gen-synth");
    assert_eq!(m.seed, Some(5));
    assert_eq!(json_hash(&m.config), m.config_hash);
    assert_eq!(m.outputs.len(), 2);
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(
        code(&d2v(&[
            "gen-synth",
            "--domains",
            "0",
            "--examples",
            "4",
            "--out",
            path(&out)
        ])),
        1
    );
    assert_eq!(
        code(&d2v(&["gen-synth", "--examples", "4", "--out", path(&out)])),
        1
    );
    assert_eq!(code(&d2v(&["no-such-command"])), 1);
    assert_eq!(code(&d2v(&["--help"])), 0);
    let missing = tmp.path().join("missing");
    assert_eq!(
        code(&d2v(&[
            "train",
            "--data",
            path(&missing),
            "--out",
            path(&out)
        ])),
        1
    );
}

#[test]
fn non_empty_out_dir_needs_force() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("d");
    let args = [
        "gen-synth",
        "--domains",
        "1",
        "--examples",
        "4",
        "--out",
        path(&out),
    ];
    ok(&args);
    let again = d2v(&args);
    assert_eq!(code(&again), 1);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced);
}

#[test]
fn train_then_eval() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    ok(&[
        "gen-synth",
        "--domains",
        "2",
        "--examples",
        "8",
        "--seed",
        "1",
        "--out",
        path(&data),
    ]);
    ok(&[
        "train",
        "--data",
        path(&data),
        "--epochs",
        "1",
        "--main-batch",
        "4",
        "--out",
        path(&run),
    ]);

    let lines: Vec<MetricsRecord> = fs::read_to_string(run.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.iter().map(|r| r.epoch).collect::<Vec<_>>(), [0, 1]);

    let ckpt = Checkpoint::load(&run.join("model.json")).unwrap();
    let m = manifest(&run);
    assert_eq!(ckpt.config_hash, m.config_hash);
    assert_eq!(json_hash(&m.config), m.config_hash);
    assert_eq!(m.config["epochs"], 1);
    assert_eq!(m.config["method"], "d2v");

    // the echoed config reproduces the run
    let rerun = tmp.path().join("rerun");
    let config = run.join("config.json");
    ok(&[
        "train",
        "--data",
        path(&data),
        "--config",
        path(&config),
        "--out",
        path(&rerun),
    ]);
    assert_eq!(
        fs::read(run.join("model.json")).unwrap(),
        fs::read(rerun.join("model.json")).unwrap()
    );

    let eval = tmp.path().join("eval");
    ok(&[
        "eval",
        "--model",
        path(&run.join("model.json")),
        "--data",
        path(&data),
        "--out",
        path(&eval),
    ]);
    let ev: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(ev["per_domain"].as_array().unwrap().len(), 2);
    let preds = fs::read_to_string(eval.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1 + 16);
}

#[test]
fn malformed_configs_name_the_field() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "gen-synth",
        "--domains",
        "2",
        "--examples",
        "8",
        "--out",
        path(&data),
    ]);
    let cases = [
        (r#"{"schema_version":1,"lr":"fast"}"#, "lr"),
        (r#"{"schema_version":1,"epochz":3}"#, "epochz"),
        (r#"{"schema_version":1,"main_batch":0}"#, "main_batch"),
        (r#"{"schema_version":1,"method":"svm"}"#, "method"),
        (r#"{"lr":0.1}"#, "schema_version"),
        (r#"{"schema_version":2}"#, "schema_version"),
    ];
    for (i, (text, field)) in cases.iter().enumerate() {
        let cfg = tmp.path().join(format!("c{i}.json"));
        fs::write(&cfg, text).unwrap();
        let out = d2v(&[
            "train",
            "--data",
            path(&data),
            "--config",
            path(&cfg),
            "--out",
            path(&tmp.path().join(format!("o{i}"))),
        ]);
        assert_eq!(code(&out), 1, "{text}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{text}: {err}");
    }
}

#[test]
fn baseline_checkpoint_trains_and_evaluates() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    ok(&[
        "gen-synth",
        "--domains",
        "3",
        "--examples",
        "16",
        "--out",
        path(&data),
    ]);
    ok(&[
        "train",
        "--data",
        path(&data),
        "--method",
        "baseline",
        "--epochs",
        "2",
        "--main-batch",
        "8",
        "--out",
        path(&run),
    ]);
    let sim = d2v(&[
        "similarity",
        "--model",
        path(&run.join("model.json")),
        "--data",
        path(&data),
        "--out",
        path(&tmp.path().join("s")),
    ]);
    assert_eq!(code(&sim), 1);
    ok(&[
        "eval",
        "--model",
        path(&run.join("model.json")),
        "--data",
        path(&data),
        "--out",
        path(&tmp.path().join("e")),
    ]);
}

#[test]
fn similarity_emits_matrices() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    let sim = tmp.path().join("sim");
    ok(&[
        "gen-synth",
        "--domains",
        "6",
        "--examples",
        "32",
        "--seed",
        "2",
        "--out",
        path(&data),
    ]);
    ok(&[
        "train",
        "--data",
        path(&data),
        "--epochs",
        "2",
        "--out",
        path(&run),
    ]);
    ok(&[
        "similarity",
        "--model",
        path(&run.join("model.json")),
        "--data",
        path(&data),
        "--out",
        path(&sim),
    ]);
    for name in ["estimated", "known", "random"] {
        let csv = fs::read_to_string(sim.join(format!("{name}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 7, "{name}");
        let pgm = fs::read(sim.join(format!("{name}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n6 6\n255\n"));
        assert_eq!(pgm.len(), b"P5\n6 6\n255\n".len() + 36);
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sim.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(report["estimated_vs_known"]["pairs"], 15);

    let fixed = tmp.path().join("fixed");
    ok(&[
        "similarity",
        "--model",
        path(&run.join("model.json")),
        "--data",
        path(&data),
        "--sigma",
        "0.5",
        "--out",
        path(&fixed),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixed.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(report["sigma_estimated"], 0.5);
    let bad = d2v(&[
        "similarity",
        "--model",
        path(&run.join("model.json")),
        "--data",
        path(&data),
        "--sigma",
        "-1",
        "--out",
        path(&tmp.path().join("b")),
    ]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn sweep_default_grid_has_96_rows() {
    let tmp = tempdir().unwrap();
    let out = tmp.path().join("sweep");
    ok(&["sweep", "--epochs", "0", "--out", path(&out)]);
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 6 * 8 * 2);
    let pgm = fs::read(out.join("d2v.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n8 6\n255\n"));
}

#[test]
fn search_writes_trials_and_a_reusable_best_config() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("search");
    ok(&[
        "gen-synth",
        "--domains",
        "5",
        "--examples",
        "32",
        "--out",
        path(&data),
    ]);
    let space = tmp.path().join("space.json");
    fs::write(
        &space,
        r#"{"lr":{"lo":1e-3,"hi":1e-2},"weight_decay":{"lo":0,"hi":0},"task_hidden":[4,8],"main_hidden":[8],"trials":3}"#,
    )
    .unwrap();
    ok(&[
        "search",
        "--space",
        path(&space),
        "--data",
        path(&data),
        "--epochs",
        "2",
        "--out",
        path(&out),
    ]);
    assert_eq!(
        fs::read_to_string(out.join("trials.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    ok(&[
        "train",
        "--data",
        path(&data),
        "--config",
        path(&out.join("best_config.json")),
        "--out",
        path(&tmp.path().join("t")),
    ]);

    fs::write(&space, r#"{"lr":{"lo":1e-2,"hi":1e-3},"weight_decay":{"lo":0,"hi":0},"task_hidden":[4],"main_hidden":[8],"trials":3}"#).unwrap();
    let bad = d2v(&[
        "search",
        "--space",
        path(&space),
        "--data",
        path(&data),
        "--out",
        path(&tmp.path().join("s2")),
    ]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("lr"));
}

#[test]
fn divergence_is_a_runtime_failure() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "gen-synth",
        "--domains",
        "2",
        "--examples",
        "8",
        "--out",
        path(&data),
    ]);
    let out = d2v(&[
        "train",
        "--data",
        path(&data),
        "--lr",
        "1e300",
        "--weight-decay",
        "0",
        "--epochs",
        "5",
        "--main-batch",
        "2",
        "--out",
        path(&tmp.path().join("r")),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn thread_variable_is_validated() {
    let tmp = tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_d2v"))
        .env("D2V_THREADS", "zero")
        .args([
            "gen-synth",
            "--domains",
            "1",
            "--examples",
            "2",
            "--out",
            path(&tmp.path().join("x")),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_d2v"))
        .env("D2V_THREADS", "2")
        .args([
            "gen-synth",
            "--domains",
            "1",
            "--examples",
            "2",
            "--out",
            path(&tmp.path().join("y")),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn inputs_are_not_modified() {
    let tmp = tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "gen-synth",
        "--domains",
        "2",
        "--examples",
        "8",
        "--out",
        path(&data),
    ]);
    let before = fs::read(data.join("data.csv")).unwrap();
    ok(&[
        "train",
        "--data",
        path(&data),
        "--epochs",
        "1",
        "--main-batch",
        "4",
        "--out",
        path(&tmp.path().join("r")),
    ]);
    assert_eq!(before, fs::read(data.join("data.csv")).unwrap());
}
