use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use memsac_core::data::load_feature_table;

const SMALL: &[&str] = &[
    "--classes",
    "5",
    "--dim",
    "4",
    "--per-class",
    "20",
    "--total-iters",
    "40",
    "--bootstrap-iters",
    "10",
    "--batch-size",
    "8",
    "--bank-capacity",
    "64",
    "--encoder-hidden",
    "12",
    "--feature-dim",
    "6",
    "--disc-hidden",
    "8",
];

fn memsac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memsac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn train(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let o = memsac(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

#[test]
fn csv_header_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    train(dir.path(), &[]);
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "iter,l_sup,l_d,l_sc,total,lr_encoder,lr_heads,bank_size,mean_sim_avg,mean_sim_literal,pl_acc,skip_count"
    );
    assert_eq!(csv.lines().count(), 41);
    for f in ["summary.json", "model.json", "manifest.cfg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn fixed_seed_reproduces_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&a, &["--seed", "7"]);
    train(&b, &["--seed", "7"]);
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&a, &["--seed", "3", "--tau", "0.2"]);
    let manifest = a.join("manifest.cfg");
    let o = memsac(&[
        "train",
        "--out",
        b.to_str().unwrap(),
        "--config",
        manifest.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn zero_consistency_weight_zeroes_consistency_columns() {
    let dir = tempfile::tempdir().unwrap();
    train(dir.path(), &["--lambda-sc", "0"]);
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(column(&csv, "l_sc").iter().all(|v| v == "0"));
    assert!(column(&csv, "skip_count").iter().all(|v| v == "0"));
}

#[test]
fn unknown_key_fails_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = memsac(&[
        "train",
        "--out",
        dir.path().to_str().unwrap(),
        "--lambda-xy",
        "1",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda_xy"));
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "tau = 0.1\nnot_a_key = 2\n").unwrap();
    let o = memsac(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("not_a_key"));
}

#[test]
fn diverging_run_exits_nonzero_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--out", dir.path().to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--lr-heads", "1e200", "--lr-encoder", "1e200"]);
    let o = memsac(&args);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("iteration"), "{err}");
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn generated_tables_load_and_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = memsac(&[
        "gen-data",
        "--out",
        data.to_str().unwrap(),
        "--classes",
        "4",
        "--dim",
        "6",
        "--per-class",
        "300",
        "--rotation",
        "0",
        "--noise",
        "0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let src = load_feature_table(data.join("source.csv")).unwrap();
    let tgt = load_feature_table(data.join("target.csv")).unwrap();
    assert_eq!((src.len(), src.dim(), src.classes), (1200, 6, 4));
    assert_eq!((tgt.len(), tgt.dim()), (1200, 6));
    // Without a shift both files are draws from one distribution.
    for c in 0..6 {
        let mean = |t: &memsac_core::data::FeatureTable| {
            t.samples.iter_rows().map(|r| r[c]).sum::<f64>() / t.len() as f64
        };
        assert!((mean(&src) - mean(&tgt)).abs() < 0.25, "column {c}");
    }

    let run = dir.path().join("run");
    let o = memsac(&[
        "train",
        "--out",
        run.to_str().unwrap(),
        "--source",
        data.join("source.csv").to_str().unwrap(),
        "--target",
        data.join("target.csv").to_str().unwrap(),
        "--total-iters",
        "30",
        "--bootstrap-iters",
        "10",
        "--bank-capacity",
        "64",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(run.join("summary.json")).unwrap()).unwrap();

    let o = memsac(&[
        "eval",
        "--model",
        run.join("model.json").to_str().unwrap(),
        "--data",
        data.join("target.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["accuracy"], summary["accuracy"]);
    assert_eq!(report["samples"], 1200);
}

#[test]
fn bank_sweep_row_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "ablate",
        "--axis",
        "bank_capacity",
        "--values",
        "32,256,1024,4096",
        "--seeds",
        "0,1,2",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--total-iters", "15"]);
    let o = memsac(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 16);
    assert_eq!(
        rows.iter()
            .filter(|r| r.split(',').nth(2) == Some("median"))
            .count(),
        4
    );
}

#[test]
fn single_value_sweep_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    let mut args = vec![
        "ablate",
        "--axis",
        "tau",
        "--values",
        "0.07",
        "--seeds",
        "5",
        "--out",
        sweep.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    let o = memsac(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let single = dir.path().join("single");
    train(&single, &["--seed", "5", "--tau", "0.07"]);
    let member = sweep.join("runs").join("tau=0.07").join("seed5");
    assert_eq!(
        fs::read(member.join("metrics.csv")).unwrap(),
        fs::read(single.join("metrics.csv")).unwrap()
    );
    assert_eq!(
        fs::read(member.join("summary.json")).unwrap(),
        fs::read(single.join("summary.json")).unwrap()
    );
}

#[test]
fn unknown_axis_fails() {
    let o = memsac(&["ablate", "--axis", "depth", "--values", "1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("depth"));
}
