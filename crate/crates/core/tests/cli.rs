mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use expsig::config::RunConfig;
use expsig::datasets::{load_tsv, write_tsv};
use expsig::model::io::load_model;
use expsig::model::ModelParams;

const SMALL: &str = "level = 2\nsamples = 4\nlearning_rate = 0.5\nbatch_size = 8\nepochs = 3\n\n[task]\nn_points = 8\ntrain_per_class = 6\ntest_per_class = 4\n";

fn expsig(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_expsig")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn ok(args: &[&str]) {
    let (code, err) = expsig(args);
    assert_eq!(code, 0, "{args:?}: {err}");
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    /// Separable ramps written as `ramps_train.tsv` / `ramps_test.tsv`.
    fn ramps(&self) {
        write_tsv(self.path("ramps_train.tsv"), &common::ramps(10, 8, 1)).unwrap();
        write_tsv(self.path("ramps_test.tsv"), &common::ramps(6, 8, 2)).unwrap();
    }
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn gen_is_byte_identical_and_bidim_has_six_classes() {
    let w = Workspace::new(SMALL);
    let (cfg, out) = (w.s("run.toml"), w.s("gen"));
    let args = ["gen", "--task", "bidim", "--seed", "7", "--config", &cfg, "--out", &out];
    ok(&args);
    let files = ["bidim_train.tsv", "bidim_test.tsv", "bidim_meta.toml"];
    let first: Vec<String> = files.iter().map(|f| read(w.path("gen").join(f))).collect();
    ok(&args);
    for (f, before) in files.iter().zip(&first) {
        assert_eq!(&read(w.path("gen").join(f)), before, "{f}");
    }
    let train = load_tsv(w.path("gen").join("bidim_train.tsv")).unwrap();
    assert_eq!(train.class_count(), 6);
    assert_eq!(train.dim(), 2);
    assert!(first[2].starts_with("# expsig gen"));
    assert!(first[2].contains("seed = 7"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(expsig(&["gen"]).0, 2);
    assert_eq!(expsig(&["gen", "--task", "nope"]).0, 2);
    assert_eq!(expsig(&["frobnicate"]).0, 2);
    let w = Workspace::new("level = 0\n");
    let (code, err) = expsig(&["gen", "--task", "ou", "--config", &w.s("missing.toml")]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn zero_learning_rate_writes_the_initial_model() {
    let w = Workspace::new("learning_rate = 0.0\nepochs = 2\nlevel = 2\nsamples = 3\n");
    w.ramps();
    ok(&["train", "--train", &w.s("ramps_train.tsv"), "--config", &w.s("run.toml"), "--out", &w.s("o")]);
    let saved = load_model(w.path("o").join("model.txt")).unwrap();
    let cfg = RunConfig::load(w.path("run.toml")).unwrap();
    let mut init = ModelParams::init(1, 8, 2, cfg.hyper().unwrap()).unwrap();
    init.labels = vec!["0".into(), "1".into()];
    assert_eq!(saved, init);
}

#[test]
fn training_separates_ramps_reproducibly() {
    let w = Workspace::new("learning_rate = 0.5\nepochs = 15\nbatch_size = 4\nlevel = 2\nsamples = 4\n");
    w.ramps();
    let args = [
        "train",
        "--train",
        &w.s("ramps_train.tsv"),
        "--val",
        &w.s("ramps_test.tsv"),
        "--config",
        &w.s("run.toml"),
        "--out",
        &w.s("o"),
    ];
    ok(&args);
    let history = read(w.path("o").join("history.csv"));
    let model = read(w.path("o").join("model.txt"));
    assert!(history.starts_with("# expsig train"));
    let rows = data_rows(&history);
    assert_eq!(rows.len(), 15);
    let last = rows.last().unwrap();
    assert!(last[2].parse::<f64>().unwrap() >= 0.99, "{history}");
    assert!(last[3].parse::<f64>().unwrap() >= 0.99, "{history}");
    ok(&args);
    assert_eq!(read(w.path("o").join("history.csv")), history);
    assert_eq!(read(w.path("o").join("model.txt")), model);
}

#[test]
fn eval_reports_runs_and_probabilities() {
    let w = Workspace::new("augment = false\nlearning_rate = 0.5\nepochs = 5\nbatch_size = 4\n");
    w.ramps();
    let (cfg, o) = (w.s("run.toml"), w.s("o"));
    ok(&["train", "--train", &w.s("ramps_train.tsv"), "--config", &cfg, "--out", &o]);
    let model = w.path("o").join("model.txt").to_string_lossy().into_owned();
    let test = w.s("ramps_test.tsv");
    ok(&["eval", "--model", &model, "--test", &test, "--runs", "4", "--config", &cfg, "--out", &o]);
    let metrics = read(w.path("o").join("metrics.csv"));
    let rows = data_rows(&metrics);
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert_eq!(r[2..], rows[0][2..], "deterministic model scores differ: {metrics}");
    }
    let probs = read(w.path("o").join("probs.csv"));
    for r in data_rows(&probs) {
        let s: f64 = r[3..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
    ok(&["eval", "--model", &model, "--test", &test, "--runs", "1", "--config", &cfg, "--out", &o]);
    let rows = data_rows(&read(w.path("o").join("metrics.csv")));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][2..], rows[1][2..]);
    let bidim = Workspace::new(SMALL);
    ok(&["gen", "--task", "bidim", "--config", &bidim.s("run.toml"), "--out", &bidim.s(".")]);
    let (code, _) = expsig(&["eval", "--model", &model, "--test", &bidim.s("bidim_test.tsv"), "--out", &o]);
    assert_eq!(code, 1);
}

#[test]
fn variance_sweep_and_deterministic_augmentation() {
    let w = Workspace::new("learning_rate = 0.0\nepochs = 1\nv_init_scale = 0.0\nlevel = 2\nsamples = 4\n");
    w.ramps();
    let (cfg, o) = (w.s("run.toml"), w.s("o"));
    ok(&["train", "--train", &w.s("ramps_train.tsv"), "--config", &cfg, "--out", &o]);
    let model = w.path("o").join("model.txt").to_string_lossy().into_owned();
    let test = w.s("ramps_test.tsv");
    ok(&["variance", "--model", &model, "--test", &test, "--runs", "5", "--k", "2,8", "--config", &cfg, "--out", &o]);
    for k in [2, 8] {
        let text = read(w.path("o").join(format!("variance_K{k}.csv")));
        let rows = data_rows(&text);
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap().abs() < 1e-24), "{text}");
        assert!(w.path("o").join(format!("histogram_K{k}.csv")).exists());
    }
}

#[test]
fn benchmark_table_has_five_models_and_reruns_identically() {
    let w = Workspace::new("learning_rate = 0.5\nepochs = 15\nbatch_size = 4\nlevel = 2\nsamples = 4\n");
    w.ramps();
    let args = [
        "benchmark",
        "--train",
        &w.s("ramps_train.tsv"),
        "--test",
        &w.s("ramps_test.tsv"),
        "--runs",
        "2",
        "--config",
        &w.s("run.toml"),
        "--out",
        &w.s("o"),
    ];
    ok(&args);
    let text = read(w.path("o").join("benchmark.csv"));
    let mut lines = text.lines().skip(1);
    assert_eq!(lines.next(), Some("dataset,NoAug,FFT,CS,GP,Model"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 6);
    for v in &row[1..] {
        assert!(v.parse::<f64>().unwrap() >= 0.99, "{text}");
    }
    ok(&args);
    assert_eq!(read(w.path("o").join("benchmark.csv")), text);
}
