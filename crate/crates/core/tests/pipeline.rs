//! End-to-end runs of the command-line pipeline on synthetic data.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{reproduce, synthetic_ratings};

const BIN: &str = env!("CARGO_BIN_EXE_interest-retrieval");

const SMALL_MODEL: &str = "\
model.d_in = 16
model.d_int = 8
model.tower = 32,16
model.batch_size = 256
model.max_epochs = 4
model.eval_every = 2
model.patience = 2
retrieval.n_clusters = 3
retrieval.repetitions = 2
stability.fractions = 1.0,0.97,0.95
grid.lr = 0.001,0.005
grid.dropout = 0.1
";

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        synthetic_ratings(&root.join("ratings.dat"), 150, 120, 6, 25, 11);
        let conf = format!("seed = 5\nworkdir = work\ndata.path = ratings.dat\nthreads = 1\n{SMALL_MODEL}{extra}");
        std::fs::write(root.join("pipeline.conf"), conf).unwrap();
        Self { _tmp: tmp, root }
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .arg("--config")
            .arg(self.root.join("pipeline.conf"))
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn work(&self, name: &str) -> PathBuf {
        self.root.join("work").join(name)
    }
}

const STAGES: &[&[&str]] = &[
    &["ingest"],
    &["cluster"],
    &["interest"],
    &["train"],
    &["train", "--set", "model.fusion=none"],
    &["retrieve", "--strategy", "popular"],
    &["retrieve", "--strategy", "full"],
    &["retrieve", "--strategy", "cluster"],
    &["retrieve", "--strategy", "kmeans"],
    &["retrieve", "--strategy", "full", "--set", "model.fusion=none"],
    &["evaluate", "--strategy", "popular"],
    &["evaluate", "--strategy", "full"],
    &["evaluate", "--strategy", "kmeans"],
    &["evaluate", "--strategy", "full", "--set", "model.fusion=none"],
    &["evaluate", "--strategy", "cluster", "--deciles", "full-none", "--popularity"],
    &["stability"],
];

fn run_all(ws: &Workspace) {
    for args in STAGES {
        ws.ok(args);
    }
}

fn artifacts(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn full_pipeline_produces_every_artifact() {
    let ws = Workspace::new("");
    run_all(&ws);
    for name in [
        "dataset.tsv",
        "train.tsv",
        "val.tsv",
        "test.tsv",
        "clustering.tsv",
        "profiles.tsv",
        "model.concat.bin",
        "model.none.bin",
        "trainlog.concat.json",
        "user_embeddings.concat.bin",
        "item_embeddings.concat.bin",
        "recs.popular.tsv",
        "recs.cluster-concat.tsv",
        "recs.kmeans-concat.tsv",
        "timing.cluster-concat.json",
        "eval.cluster-concat.json",
        "eval.cluster-concat.users.tsv",
        "deciles.cluster-concat.vs.full-none.csv",
        "popularity.cluster-concat.csv",
        "stability.json",
    ] {
        assert!(ws.work(name).is_file(), "missing {name}");
    }

    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.work("eval.cluster-concat.json")).unwrap()).unwrap();
    for key in ["strategy", "k_values", "means", "std", "excluded_users", "per_user_path", "provenance"] {
        assert!(eval.get(key).is_some(), "eval JSON lacks {key}");
    }
    for (_, v) in eval["means"].as_object().unwrap() {
        let v = v.as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    let timing: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.work("timing.cluster-concat.json")).unwrap()).unwrap();
    for key in ["strategy", "users", "total_seconds", "median_seconds", "candidates_scored"] {
        assert!(timing["timing"].get(key).is_some(), "timing JSON lacks {key}");
    }
    let stability: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.work("stability.json")).unwrap()).unwrap();
    assert_eq!(stability["ari"].as_array().unwrap().len(), 2);

    // every artifact except the raw embedding matrices carries provenance
    for path in artifacts(&ws.root.join("work")) {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.contains("_embeddings.") {
            continue;
        }
        let bytes = std::fs::read(&path).unwrap();
        if name.ends_with(".json") {
            let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            let (first, p) = v.as_object().unwrap().iter().next().unwrap();
            assert_eq!(first, "provenance", "{name}");
            assert_eq!(p["seed"], 5);
            for key in ["command", "config_hash", "timestamp"] {
                assert!(p.get(key).is_some(), "{name} provenance lacks {key}");
            }
            continue;
        }
        let head = String::from_utf8_lossy(&bytes[..bytes.len().min(400)]);
        assert!(
            head.contains("command=") && head.contains("config_hash=") && head.contains("seed=5") && head.contains("timestamp="),
            "{name} lacks a provenance header"
        );
    }

    let rows = std::fs::read_to_string(ws.work("eval.cluster-concat.users.tsv")).unwrap();
    assert!(rows.lines().any(|l| l.starts_with("user\ttrain_degree\tprecision@10")));
    let deciles = std::fs::read_to_string(ws.work("deciles.cluster-concat.vs.full-none.csv")).unwrap();
    assert_eq!(deciles.lines().filter(|l| !l.starts_with('#')).count(), 11);
}

#[test]
fn rerun_is_byte_identical() {
    let ws = Workspace::new("");
    run_all(&ws);
    ws.ok(&["grid"]);
    let snapshot: Vec<(PathBuf, Vec<u8>)> = artifacts(&ws.root.join("work"))
        .into_iter()
        .map(|p| {
            let b = std::fs::read(&p).unwrap();
            (p, b)
        })
        .collect();
    run_all(&ws);
    ws.ok(&["grid"]);
    for (path, before) in snapshot {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        // wall-clock measurements
        if name.starts_with("timing.") || name.starts_with("trainlog.") {
            continue;
        }
        assert!(std::fs::read(&path).unwrap() == before, "{name} changed on rerun");
    }
}

#[test]
fn missing_upstream_artifact_names_the_command() {
    let ws = Workspace::new("");
    let out = ws.run(&["cluster"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`ingest`"), "{err}");

    ws.ok(&["ingest"]);
    let out = ws.run(&["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`cluster`"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new("");
    assert_eq!(ws.run(&["ingest", "--set", "no.such.key=1"]).status.code(), Some(1));
    assert_eq!(ws.run(&["bogus"]).status.code(), Some(1));
    assert_eq!(ws.run(&["ingest", "--set", "data.path=absent.dat"]).status.code(), Some(1));
    std::fs::write(ws.root.join("bad.dat"), "1::2::x::y\n").unwrap();
    assert_eq!(ws.run(&["ingest", "--set", "data.path=bad.dat"]).status.code(), Some(2));

    let no_seed = Workspace::new("");
    let conf = std::fs::read_to_string(no_seed.root.join("pipeline.conf")).unwrap();
    std::fs::write(no_seed.root.join("pipeline.conf"), conf.replace("seed = 5\n", "")).unwrap();
    let out = no_seed.run(&["ingest"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn grid_selects_highest_validation_recall() {
    let ws = Workspace::new("");
    for args in &STAGES[..3] {
        ws.ok(args);
    }
    ws.ok(&["grid"]);
    let text = std::fs::read_to_string(ws.work("grid.concat.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    let best = rows
        .iter()
        .max_by(|a, b| a[2].parse::<f64>().unwrap().total_cmp(&b[2].parse::<f64>().unwrap()))
        .unwrap();
    assert!(text.contains(&format!("# best learning_rate={} dropout={}", best[0], best[1])));
}

#[test]
fn reproduction_driver_on_synthetic_data() {
    let tmp = tempfile::tempdir().unwrap();
    let ratings = tmp.path().join("ratings.dat");
    synthetic_ratings(&ratings, 200, 150, 6, 25, 3);
    let overrides = [
        "model.d_in=16",
        "model.d_int=8",
        "model.tower=32,16",
        "model.batch_size=256",
        "model.max_epochs=4",
        "model.eval_every=2",
        "model.patience=2",
        "retrieval.repetitions=1",
    ];
    let r = reproduce(&ratings, &tmp.path().join("work"), &[1, 2], &overrides).unwrap();
    assert_eq!(r.vanilla.len(), 2);
    assert_eq!(r.uic.len(), 2);
    assert_eq!(r.ari.len(), 4);
    assert_eq!(r.deciles.len(), 10);
    assert!(r.deciles_csv.is_file());
    // 10% ratio on the train co-engagement graph
    assert!(r.num_clusters.abs_diff(r.num_items / 10) <= r.num_items / 10);
    assert!(r.ablation.0.is_finite() && r.ablation.1.is_finite());
    assert!(r.timing_cluster.candidates_scored <= r.timing_full.candidates_scored);
    for rep in r.vanilla.iter().chain(&r.uic).chain([&r.popular]) {
        assert!(rep.users > 0);
    }
}
