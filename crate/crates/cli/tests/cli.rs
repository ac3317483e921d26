use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fakegroup(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fakegroup"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fakegroup(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small synthetic dataset ingested into `g.json`.
fn dataset(dir: &Path) {
    ok(dir, &["synth", "--out", "d", "--reviewers", "240", "--products", "50", "--groups", "3", "--group-size", "8", "--seed", "9"]);
    ok(dir, &["ingest", "--input", "d/events.jsonl", "--out", "g.json"]);
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    dataset(d);
    let nfs = ok(d, &["nfs", "--graph", "g.json", "--labels", "d/labels.csv", "--out", "nfs"]);
    assert!(nfs.starts_with("t* = "));
    ok(d, &["train", "--graph", "g.json", "--labels", "d/labels.csv", "--nfs", "nfs", "--out", "tr", "--max-epochs", "30"]);
    ok(d, &["score", "--graph", "g.json", "--nfs", "nfs", "--model", "tr/model.json", "--out", "sc"]);
    for f in [
        "nfs/nfs_model.json",
        "nfs/nfs_scores.csv",
        "nfs/profiles.json",
        "tr/model.json",
        "tr/history.csv",
        "tr/pooled_nodes.csv",
        "tr/pooled_edges.csv",
        "sc/reviewer_scores.csv",
        "sc/groups.json",
        "sc/config.json",
    ] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("tr/model.json")).unwrap()).unwrap();
    assert_eq!(model["kind"], "model");
    assert_eq!(model["config"]["dga"]["max_epochs"], 30);

    let scores = fs::read_to_string(d.join("nfs/nfs_scores.csv")).unwrap();
    let mut lines = scores.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| h.contains("norm")).expect("normalised column");
    for l in lines {
        let v: f64 = l.split(',').nth(col).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn ingest_counts_shrink() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--out", "d", "--reviewers", "150", "--products", "40", "--groups", "2", "--group-size", "5"]);
    let out = ok(d, &["ingest", "--input", "d/events.jsonl", "--out", "g.json", "--min-reviews", "5"]);
    for name in ["reviewers", "products", "reviews"] {
        let line = out.lines().find(|l| l.starts_with(name)).unwrap();
        let n: Vec<usize> = line.split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(n[1] <= n[0], "{line}");
    }
}

#[test]
fn eval_is_reproducible_and_reports_by_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    dataset(d);
    let args = |out: &'static str| {
        vec!["eval", "--graph", "g.json", "--labels", "d/labels.csv", "--ablation", "full,A,B,C,D", "--by-scale", "--max-epochs", "20", "--out", out]
    };
    ok(d, &args("e1"));
    ok(d, &args("e2"));
    let a = fs::read(d.join("e1/report.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("e2/report.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("variant,split,accuracy,recall,f1_macro,auroc"));
    for v in ["full", "A", "B", "C", "D"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{v},all,"))), "{v} missing");
    }
    assert!(text.lines().any(|l| !l.contains(",all,") && !l.starts_with("variant")));
}

#[test]
fn nfs_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    dataset(d);
    ok(d, &["nfs", "--graph", "g.json", "--labels", "d/labels.csv", "--out", "n1"]);
    ok(d, &["nfs", "--graph", "g.json", "--labels", "d/labels.csv", "--out", "n2"]);
    for f in ["nfs_model.json", "nfs_scores.csv", "profiles.json"] {
        assert_eq!(fs::read(d.join("n1").join(f)).unwrap(), fs::read(d.join("n2").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn dynamics_composite_from_components() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        tmp.path(),
        &["dynamics", "--components", "amazon:0.45,0.28,0.35,0.19", "--components", "xhs:0.85,0.79,0.81,0.65"],
    );
    assert!(out.contains("amazon: D = 0.3175 ≈ 0.32"), "{out}");
    assert!(out.contains("xhs: D = 0.7750 ≈ 0.78"), "{out}");
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("empty.jsonl"), "").unwrap();
    assert_eq!(fakegroup(d, &["ingest", "--input", "empty.jsonl", "--out", "g.json"]).status.code(), Some(2));

    dataset(d);
    let out = fakegroup(d, &["nfs", "--graph", "g.json", "--labels", "absent.csv", "--out", "n"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));

    let out = fakegroup(d, &["score", "--graph", "g.json", "--nfs", "n", "--model", "nowhere/model.json", "--out", "s"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/model.json"));
}

#[test]
fn toml_config_is_read_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.toml"), "seed = 11\nmin_reviews = 4\n[dga]\nmax_epochs = 7\n").unwrap();
    dataset(d);
    ok(d, &["--config", "run.toml", "ingest", "--input", "d/events.jsonl", "--out", "g4.json", "--seed", "12"]);
    let art: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("g4.json")).unwrap()).unwrap();
    assert_eq!(art["config"]["seed"], 12);
    assert_eq!(art["config"]["min_reviews"], 4);
    assert_eq!(art["config"]["dga"]["max_epochs"], 7);
    assert_eq!(art["config"]["dga"]["seed"], 12);

    fs::write(d.join("bad.toml"), "sede = 1\n").unwrap();
    let out = fakegroup(d, &["--config", "bad.toml", "ingest", "--input", "d/events.jsonl", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
}
