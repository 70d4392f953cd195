use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hub-vae")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
    csv: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("blobs.csv");
        let out = bin(&["synth", "--per-cluster", "40", "--out", s(&csv)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { dir, csv }
    }

    fn train(&self, run: &str) -> PathBuf {
        let out_dir = self.dir.path().join(run);
        let out = bin(&[
            "train", "--data", s(&self.csv), "--seed", "3", "--epochs", "3", "--batch-size", "20",
            "--components", "8", "--latent-dim", "2", "--hidden", "12", "--out-dir", s(&out_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    }
}

#[test]
fn synth_writes_labelled_csv() {
    let f = Fixture::new();
    let text = std::fs::read_to_string(&f.csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 120);
    assert!(lines.iter().all(|l| l.split(',').count() == 11));
}

#[test]
fn training_twice_gives_identical_files() {
    let f = Fixture::new();
    let a = f.train("a");
    let b = f.train("b");
    for name in ["trainlog.jsonl", "checkpoint.bin"] {
        let x = std::fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let log = std::fs::read_to_string(a.join("trainlog.jsonl")).unwrap();
    for line in log.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn eval_reports_ten_runs() {
    let f = Fixture::new();
    let ckpt = f.train("run").join("checkpoint.bin");
    let emb = f.dir.path().join("emb.csv");
    let out = bin(&["eval", "--data", s(&f.csv), "--checkpoint", s(&ckpt), "--embeddings", s(&emb)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["v_measure_mean"].as_f64().is_some());
    assert!(report["v_measure_std"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["v_measure_runs"].as_array().unwrap().len(), 10);
    let purity = report["knn_purity"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&purity));
    let n_test = report["n_test"].as_u64().unwrap() as usize;
    assert_eq!(std::fs::read_to_string(&emb).unwrap().lines().count(), n_test);
}

#[test]
fn generate_emits_count_rows_of_data_width() {
    let f = Fixture::new();
    let ckpt = f.train("run").join("checkpoint.bin");
    let out = bin(&["generate", "--data", s(&f.csv), "--checkpoint", s(&ckpt), "--hub", "0", "--count", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.len() == 10 && r.iter().all(|p| (0.0..=1.0).contains(p))));

    let bad = bin(&["generate", "--data", s(&f.csv), "--checkpoint", s(&ckpt), "--hub", "100000"]);
    assert!(!bad.status.success());
}

#[test]
fn hubs_writes_diagnostics() {
    let f = Fixture::new();
    let ckpt = f.train("run").join("checkpoint.bin");
    let out = bin(&["hubs", "--data", s(&f.csv), "--checkpoint", s(&ckpt), "--batch-size", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 2, "{text}");
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let out = bin(&["train", "--no-such-flag"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_input_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = bin(&["train", "--data", s(&missing), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
