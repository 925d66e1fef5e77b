use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctrbias::schema_file::SchemaFile;
use ctrbias_core::codec;
use ctrbias_core::model::{Arch, ModelParams};
use serde_json::{json, Value};
use tempfile::TempDir;

fn ctrbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrbias"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, value: Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    p
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn small_synth(dir: &Path) -> PathBuf {
    write(
        dir,
        "synth.json",
        json!({
            "num_users": 200,
            "num_items": 100,
            "num_groups": 5,
            "dim": 4,
            "ratios": [0.2, 0.35, 0.5, 0.65, 0.8],
            "exposures_per_user": 50,
            "unbiased_val_size": 500,
            "unbiased_per_user": 10,
            "seed": 3
        }),
    )
}

/// Synthesizes a small dataset and trains an FM on it.
struct Fixture {
    _tmp: TempDir,
    root: PathBuf,
    data: PathBuf,
    model: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let tmp = TempDir::new().unwrap();
        let root = tmp.path().to_path_buf();
        let data = root.join("data");
        let out = ctrbias(&["synth", "--config", s(&small_synth(&root)), "--out", s(&data)]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let model = root.join("model");
        let out = train(&root, &data, &model, 0.01, &[]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Self {
            _tmp: tmp,
            root,
            data,
            model,
        }
    }

    fn data(&self, name: &str) -> PathBuf {
        self.data.join(name)
    }
}

fn train(root: &Path, data: &Path, out: &Path, lr: f64, extra: &[&str]) -> Output {
    let cfg = write(
        root,
        "train.json",
        json!({"learning_rate": lr, "max_epochs": 3, "embedding_dim": 4, "batch_size": 64}),
    );
    let (schema, train, val) = (data.join("schema.json"), data.join("train.csv"), data.join("val.csv"));
    let mut args = vec![
        "train",
        "--schema",
        s(&schema),
        "--train",
        s(&train),
        "--val",
        s(&val),
        "--config",
        s(&cfg),
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    ctrbias(&args)
}

fn load_model(dir: &Path) -> ModelParams {
    codec::deserialize(&fs::read(dir.join("model.bin")).unwrap(), None).unwrap()
}

#[test]
fn synth_writes_every_split_and_repeats_itself() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_synth(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_eq!(code(&ctrbias(&["synth", "--config", s(&cfg), "--out", s(dir)])), 0);
    }
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "manifest.json",
            "schema.json",
            "test.csv",
            "train.csv",
            "truth.json",
            "unbiased_test.csv",
            "unbiased_val.csv",
            "val.csv"
        ]
    );
    for n in names.iter().filter(|n| *n != "manifest.json") {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    let (ma, mb) = (read(&a.join("manifest.json")), read(&b.join("manifest.json")));
    assert_eq!(ma["outputs"], mb["outputs"]);
    assert_eq!(ma["seed"], json!(3));
}

#[test]
fn ratio_outside_unit_interval_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        json!({"num_groups": 3, "ratios": [0.2, 1.0, 0.5]}),
    );
    let out = ctrbias(&["synth", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly inside (0, 1)"));
}

#[test]
fn divergent_training_exits_3_with_diagnostics() {
    let f = Fixture::new();
    let out = train(&f.root, &f.data, &f.root.join("boom"), 1e3, &[]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("diverged") && err.contains("epoch") && err.contains("max |logit|"), "{err}");
}

#[test]
fn frozen_bias_weights_are_saved_as_zero() {
    let f = Fixture::new();
    let dir = f.root.join("frozen");
    let out = train(&f.root, &f.data, &dir, 0.01, &["--ablation", "no_bias_linear_weights"]);
    assert_eq!(code(&out), 0);
    let p = load_model(&dir);
    assert!(p.bias_weights().iter().all(|&w| w == 0.0));
    assert!(p.linear().iter().any(|&w| w != 0.0));
    assert!(read(&dir.join("train_report.json"))["model_digest"].is_string());
}

#[test]
fn analysis_reports_three_weight_correlations() {
    let f = Fixture::new();
    let out_dir = f.root.join("analysis");
    let out = ctrbias(&[
        "analyze",
        "--schema",
        s(&f.model.join("schema.json")),
        "--model",
        s(&f.model.join("model.bin")),
        "--train",
        s(&f.data("train.csv")),
        "--test",
        s(&f.data("test.csv")),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(&out_dir.join("analysis.json"));
    for column in ["positives", "positives_minus_negatives", "ratio"] {
        assert!(report["weight_correlations"][column]["spearman"]["coefficient"].is_number(), "{column}");
    }
    let rows = fs::read_to_string(out_dir.join("scatter.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 5);
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn untrained_model_gives_warnings_not_errors() {
    let f = Fixture::new();
    let schema = SchemaFile::load(&f.model.join("schema.json")).unwrap().schema().unwrap();
    let zero = ModelParams::zeros(&schema, Arch::Fm, 4, &[]).unwrap();
    let model = f.root.join("zero.bin");
    fs::write(&model, codec::serialize(&zero)).unwrap();
    let out_dir = f.root.join("analysis");
    let out = ctrbias(&[
        "analyze",
        "--schema",
        s(&f.model.join("schema.json")),
        "--model",
        s(&model),
        "--train",
        s(&f.data("train.csv")),
        "--test",
        s(&f.data("test.csv")),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(&out_dir.join("analysis.json"));
    for column in ["positives", "positives_minus_negatives", "ratio"] {
        let c = &report["weight_correlations"][column];
        assert!(c["spearman"].is_null() && c["error"].is_string(), "{column}: {c}");
    }
    assert!(!report["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn eval_defaults_to_k5_and_missing_model_is_exit_2() {
    let f = Fixture::new();
    let out_dir = f.root.join("eval");
    let base = |model: &Path| {
        ctrbias(&[
            "eval",
            "--schema",
            s(&f.model.join("schema.json")),
            "--model",
            s(model),
            "--test",
            s(&f.data("test.csv")),
            "--out",
            s(&out_dir),
        ])
    };
    let out = base(&f.model.join("model.bin"));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(&out_dir.join("eval_report.json"));
    assert_eq!(report["k"], json!(5));
    let header = fs::read_to_string(out_dir.join("groups.csv")).unwrap();
    assert!(header.starts_with("group,label,positives,negatives,ratio,ehr,p_at_5\n"));

    assert_eq!(code(&base(&f.root.join("nope.bin"))), 2);
}

#[test]
fn debias_branches_on_unbiased_data() {
    let f = Fixture::new();
    let schema = f.model.join("schema.json");
    let model = f.model.join("model.bin");
    let debias = |out: &Path, extra: &[&str]| {
        let mut args = vec!["debias", "--schema", s(&schema), "--model", s(&model), "--out", s(out)];
        args.extend_from_slice(extra);
        ctrbias(&args)
    };

    let reduced = f.root.join("reduced");
    assert_eq!(code(&debias(&reduced, &[])), 0);
    assert_eq!(read(&reduced.join("debias_report.json"))["variant"], json!("reduction"));
    assert!(load_model(&reduced).bias_weights().iter().all(|&w| w == 0.0));

    let train = f.data("train.csv");
    let unbiased = f.data("unbiased_val.csv");
    let rebuilt = f.root.join("rebuilt");
    let out = debias(&rebuilt, &["--train", s(&train), "--unbiased", s(&unbiased)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&rebuilt.join("debias_report.json"))["variant"], json!("reconstruction"));
    let table = fs::read_to_string(rebuilt.join("search.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 7 * 7);

    let out = debias(
        &f.root.join("x"),
        &["--train", s(&train), "--unbiased", s(&unbiased), "--alpha", "0.5"],
    );
    assert_eq!(code(&out), 2);
    let out = debias(&f.root.join("y"), &["--variant", "reconstruction"]);
    assert_eq!(code(&out), 2);
}
