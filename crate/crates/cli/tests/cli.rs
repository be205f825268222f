use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use qgcn_core::graph::generators;
use qgcn_core::io;
use qgcn_core::trainer::Checkpoint;

fn qgcn(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qgcn"));
    cmd.args(args).env_remove("QPSEUDO_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn metrics(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error record is json")
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, contents: &str) -> String {
        let p = self.dir.path().join(name);
        fs::write(&p, contents).unwrap();
        p.to_str().unwrap().to_string()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn tree_edges(&self) -> String {
        self.file("tree.txt", &io::edges_to_string(&generators::balanced_binary_tree(15)))
    }
}

#[test]
fn ingestion_drops_self_loops_and_duplicates() {
    let fx = Fixture::new();
    let edges = fx.file("e.txt", "# toy\n0 1\n1 0\n1 2\n2 2\n2 3\n3 4\n");
    let out = fx.out("r");
    let o = qgcn(
        &["reconstruct", "--edges", &edges, "--epochs", "3", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&out);
    assert_eq!(m["graph"]["nodes"], 5);
    assert_eq!(m["graph"]["edges"], 4);
    assert_eq!(m["graph"]["self_loops"], 1);
    assert_eq!(m["graph"]["duplicates"], 1);
    assert_eq!(m["task"], "reconstruct");
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,loss,metric,beta"));
    assert!(history.lines().count() >= 2);
}

#[test]
fn flags_override_the_config_file_and_the_environment_overrides_the_seed() {
    let fx = Fixture::new();
    let edges = fx.tree_edges();
    let cfg = fx.file("run.conf", "# settings\nlr = 0.05\nepochs = 3\nseed = 4\noutput-activation = identity\n");
    let out = fx.out("a");
    let o = qgcn(
        &["reconstruct", "--edges", &edges, "--config", &cfg, "--epochs", "2", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&out);
    assert_eq!(m["config"]["train"]["epochs"], 2);
    assert_eq!(m["config"]["train"]["lr"], 0.05);
    assert_eq!(m["config"]["model"]["output_activation"], "identity");
    assert_eq!(m["seed"], 4);

    let out = fx.out("b");
    let o = qgcn(
        &["reconstruct", "--edges", &edges, "--epochs", "2", "--seed", "1", "--out", out.to_str().unwrap()],
        &[("QPSEUDO_SEED", "9")],
    );
    assert!(o.status.success());
    assert_eq!(metrics(&out)["seed"], 9);
}

#[test]
fn errors_are_json_records_with_distinct_exit_codes() {
    let fx = Fixture::new();
    let edges = fx.tree_edges();

    let o = qgcn(&["reconstruct", "--edges", "/nonexistent/edges.txt"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_record(&o)["error"]["kind"], "io");

    let o = qgcn(&["reconstruct", "--edges", &edges, "--signature", "7"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"]["kind"], "config");

    let o = qgcn(&["reconstruct", "--bogus"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_record(&o)["error"]["kind"], "usage");

    let o = qgcn(&["nodeclass", "--edges", &edges], &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = qgcn(&["reconstruct", "--edges", &edges], &[("QPSEUDO_SEED", "abc")]);
    assert_eq!(o.status.code(), Some(2));

    let bad = fx.file("bad.txt", "0 1\n1 x\n");
    let o = qgcn(&["reconstruct", "--edges", &bad], &[]);
    assert_eq!(o.status.code(), Some(1));
    let rec = error_record(&o);
    assert!(rec["error"]["message"].as_str().unwrap().contains(":2:"), "{rec}");
}

#[test]
fn exported_embeddings_round_trip_to_full_precision() {
    let fx = Fixture::new();
    let edges = fx.tree_edges();
    let train = fx.out("train");
    assert!(qgcn(
        &["reconstruct", "--edges", &edges, "--epochs", "5", "--signature", "2,1", "--out", train.to_str().unwrap()],
        &[],
    )
    .status
    .success());
    let ckpt = train.join("checkpoint.json");
    let export = fx.out("export");
    let o = qgcn(
        &[
            "export-embeddings",
            "--edges",
            &edges,
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--out",
            export.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = io::read_embeddings(&export.join("embeddings.csv")).unwrap();
    let graph = generators::balanced_binary_tree(15);
    let model = Checkpoint::load(&ckpt).unwrap().model;
    let want = model.embed(&graph).unwrap().points;
    assert_eq!(read.len(), 15);
    for (a, b) in read.iter().zip(&want) {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    assert_eq!(metrics(&export)["signature"], serde_json::json!([2, 1]));
}

#[test]
fn geomcheck_self_test_passes() {
    let fx = Fixture::new();
    let out = fx.out("g");
    let o = qgcn(
        &["geomcheck", "--signature", "2,1", "--beta", "-1", "--seed", "0", "--samples", "2000", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&out);
    assert_eq!(m["passed"], true);
    assert!(m["checks"].as_array().unwrap().len() >= 5);
}

#[test]
fn analyze_reports_a_positive_cycle() {
    let fx = Fixture::new();
    let edges = fx.file("c30.txt", &io::edges_to_string(&generators::cycle(30)));
    let out = fx.out("a");
    let o = qgcn(
        &["analyze", "--edges", &edges, "--dataset", "Cora", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&out);
    assert!(m["delta"]["max_delta"].as_f64().unwrap() > 0.0);
    assert_eq!(m["delta"]["exhaustive"], true);
    assert!(m["curvature"]["mean"].as_f64().unwrap() > 0.0);
    assert_eq!(m["published"]["max_delta"], 11.0);
    for name in ["delta_histogram.csv", "curvature_histogram.csv"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("bin_left,bin_right,mass"));
        let mass: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
}

#[test]
fn node_classification_with_features_and_named_labels() {
    let fx = Fixture::new();
    let g = generators::balanced_binary_tree(15);
    let edges = fx.file("e.txt", &io::edges_to_string(&g));
    let mut labels = String::from("id,label\n");
    let mut features = String::new();
    for v in 0..15 {
        let name = if v < 3 { "root" } else if v < 7 { "mid" } else { "leaf" };
        labels += &format!("{v},{name}\n");
        features += &format!("{},{}\n", g.degree(v), v % 2);
    }
    let l = fx.file("l.csv", &labels);
    let f = fx.file("f.csv", &features);
    let out = fx.out("n");
    let o = qgcn(
        &["nodeclass", "--edges", &edges, "--labels", &l, "--features", &f, "--epochs", "10", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = metrics(&out);
    assert_eq!(m["graph"]["label_names"], serde_json::json!(["leaf", "mid", "root"]));
    let f1 = m["final"]["micro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
}
