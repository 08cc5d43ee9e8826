//! End-to-end runs of the binary on a synthetic OULA directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use studentgraph_core::synthetic::{generate, write_dir, SyntheticConfig};
use studentgraph_harness::{plan, ResultsTable, RunConfig};

struct Fixture {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    out: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("oula");
    write_dir(&generate(SyntheticConfig { students: 150, seed: 21, repeat_probability: 0.2 }), &data).unwrap();
    let out = tmp.path().join("out");
    Fixture { _tmp: tmp, data, out }
}

fn sg(f: &Fixture, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_studentgraph"))
        .args(args)
        .arg("--data-dir")
        .arg(&f.data)
        .arg("--out")
        .arg(&f.out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn quick_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, body).unwrap();
    p
}

const QUICK_TRAIN: &str = r#""train": {"max_epochs": 25, "patience": 5, "tuning_day": 20,
    "grid": {"lr": [0.01], "hidden": [8], "heads": [2], "dropout": [0.0]}}"#;

#[test]
fn data_preparation_commands_are_idempotent() {
    let f = fixture();
    let first = ok(&sg(&f, &["preprocess"]));
    assert!(first.contains(" records over "), "{first}");
    let again = ok(&sg(&f, &["preprocess"]));
    assert!(again.contains("skipping"));
    // the stored summary is repeated, not recomputed differently
    assert!(again.ends_with(&first));

    ok(&sg(&f, &["snapshots"]));
    for d in [20, 100, 260] {
        assert!(f.out.join(format!("snapshots/snapshot_d{d}.csv")).exists());
    }
    for p in ["snapshots/weights.csv", "folds.csv", "pca_loadings.csv"] {
        assert!(f.out.join(p).exists(), "{p}");
    }
    let folds = std::fs::read_to_string(f.out.join("folds.csv")).unwrap();
    let stamp = std::fs::metadata(f.out.join("folds.csv")).unwrap().modified().unwrap();
    assert!(ok(&sg(&f, &["snapshots"])).contains("skipping"));
    assert_eq!(std::fs::metadata(f.out.join("folds.csv")).unwrap().modified().unwrap(), stamp);
    // forced recomputation reproduces the same folds
    assert!(!ok(&sg(&f, &["snapshots", "--force"])).contains("skipping"));
    assert_eq!(std::fs::read_to_string(f.out.join("folds.csv")).unwrap(), folds);

    let stats = ok(&sg(&f, &["graphs"]));
    assert_eq!(stats.lines().count(), 1 + 5 * 2);
    assert!(f.out.join("graphs/fold4_validation_edges.csv").exists());
    assert!(ok(&sg(&f, &["graphs"])).contains("skipping"));
}

#[test]
fn baselines_then_report_then_force() {
    let f = fixture();
    ok(&sg(&f, &["baselines", "--models", "LR,DT", "--days", "20,260"]));
    let t = ResultsTable::load(&f.out.join("results.jsonl")).unwrap();
    assert_eq!(t.rows.len(), 2 * 2 * 5);
    assert!(ok(&sg(&f, &["baselines", "--models", "LR,DT", "--days", "20,260"])).contains("nothing to do"));

    ok(&sg(&f, &["report"]));
    for name in ["table4", "table5", "table6", "table7"] {
        assert!(f.out.join(format!("report/{name}.csv")).exists());
        assert!(f.out.join(format!("report/{name}.md")).exists());
    }
    let t4 = std::fs::read_to_string(f.out.join("report/table4.csv")).unwrap();
    assert_eq!(t4.lines().next().unwrap(), "model,metric,20,260");
    assert_eq!(t4.lines().count(), 1 + 2 * 4);

    ok(&sg(&f, &["baselines", "--models", "LR", "--days", "20", "--force"]));
    let t = ResultsTable::load(&f.out.join("results.jsonl")).unwrap();
    assert_eq!(t.rows.len(), 20 + 5);
    assert_eq!(t.completed().len(), 20);
}

#[test]
fn sweep_from_config_covers_every_key_and_resumes() {
    let f = fixture();
    std::fs::create_dir_all(&f.out).unwrap();
    let cfg_path = quick_config(
        &f.out,
        &format!(r#"{{"models": ["LR", "GNB", "HAN", "HGT"], "cases": [1, 5], "days": [20, 140], "folds": 3, {QUICK_TRAIN}}}"#),
    );
    let cfg_arg = cfg_path.to_str().unwrap();
    ok(&sg(&f, &["sweep", "--config", cfg_arg]));
    let mut cfg = RunConfig::load(&cfg_path).unwrap();
    cfg.output_dir = f.out.clone();
    let keys: Vec<_> = plan(&cfg).iter().map(|j| j.key()).collect();
    assert_eq!(keys.len(), 2 * 3 * (2 + 2 * 2));
    let t = ResultsTable::load(&cfg.results_path()).unwrap();
    assert!(keys.iter().all(|k| t.completed().contains(k)));
    for k in keys.iter().filter(|k| k.model.starts_with('H')) {
        let ck = f.out.join(format!("checkpoints/{}_case{}_day{}_fold{}.json", k.model, k.case, k.day, k.fold));
        assert!(ck.exists(), "{}", ck.display());
    }

    // drop the tail and resume
    let text = std::fs::read_to_string(cfg.results_path()).unwrap();
    let kept: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    std::fs::write(cfg.results_path(), kept).unwrap();
    ok(&sg(&f, &["sweep", "--config", cfg_arg]));
    let t = ResultsTable::load(&cfg.results_path()).unwrap();
    assert_eq!(t.rows.len(), keys.len());
    assert!(ok(&sg(&f, &["sweep", "--config", cfg_arg])).contains("nothing to do"));

    ok(&sg(&f, &["snapshots"]));
    let out = ok(&sg(&f, &["report", "--config", cfg_arg]));
    assert!(out.contains("wrote 16 files"), "{out}");
    assert!(f.out.join("report/pca_heatmap.svg").exists());
}

#[test]
fn train_gnn_writes_checkpoints_for_graph_models_only() {
    let f = fixture();
    std::fs::create_dir_all(&f.out).unwrap();
    let cfg = quick_config(&f.out, &format!(r#"{{"folds": 2, {QUICK_TRAIN}}}"#));
    let args = ["train-gnn", "--config", cfg.to_str().unwrap(), "--models", "HGT,LR", "--cases", "5", "--days", "20"];
    ok(&sg(&f, &args));
    let t = ResultsTable::load(&f.out.join("results.jsonl")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.rows.iter().all(|r| r.key.model == "HGT" && r.epochs.is_some()));
    assert!(f.out.join("checkpoints/HGT_case5_day20_fold1.json").exists());
    assert!(f.out.join("tuning.json").exists());
    let o = sg(&f, &["train-gnn", "--models", "LR"]);
    assert!(!o.status.success());
}

#[test]
fn report_without_results_fails() {
    let f = fixture();
    let o = sg(&f, &["report"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no results"));
    // an empty file is no better than a missing one
    std::fs::create_dir_all(&f.out).unwrap();
    std::fs::write(f.out.join("results.jsonl"), "").unwrap();
    let o = sg(&f, &["report"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no results"));
}

#[test]
fn bad_flags_and_configs_are_usage_errors() {
    let f = fixture();
    for args in [
        &["sweep", "--days", "21"][..],
        &["sweep", "--cases", "6"],
        &["sweep", "--models", "XGBoost"],
        &["sweep", "--seed", "minus-one"],
        &["sweep", "--bogus"],
        &["frobnicate"],
        &["sweep", "--config", "/nonexistent/run.json"],
    ] {
        let o = sg(&f, args);
        assert!(!o.status.success(), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
        assert!(!f.out.join("results.jsonl").exists(), "{args:?}");
    }
    std::fs::create_dir_all(&f.out).unwrap();
    let bad = quick_config(&f.out, r#"{"folds": 1}"#);
    let o = sg(&f, &["sweep", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("folds"));
}
