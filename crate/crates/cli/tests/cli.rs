mod common;

use common::{ockelm, read, uci, write_flight};
use predicates::prelude::*;
use predicates::str::contains;

#[test]
fn split_iris_sizes_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ockelm()
        .args(["split", uci("iris.csv").to_str().unwrap(), "--target", "setosa", "--seed", "4", "--out-dir"])
        .arg(dir.path())
        .assert()
        .success();
    let rows = |f: &str| read(&dir.path().join(f)).lines().count() - 1;
    assert_eq!(rows("train.csv"), 25);
    assert_eq!(rows("test.csv"), 75);
    assert_eq!(rows("cvpool.csv"), 50);
    assert!(!read(&dir.path().join("train.csv")).lines().next().unwrap().contains("label"));
    let m: serde_json::Value = serde_json::from_str(&read(&dir.path().join("split.json"))).unwrap();
    assert_eq!(m["seed"], 4);
    assert_eq!(m["test_targets"], 25);
    assert_eq!(m["test_outliers"], 50);
}

#[test]
fn usage_errors_exit_2() {
    ockelm().args(["split", "x.csv"]).assert().code(2);
    ockelm()
        .args(["fit", "t.csv", "--sigma", "1", "--T", "4", "--C", "10", "--theta", "1.5", "--out", "m.json"])
        .assert()
        .code(2)
        .stderr(contains("theta"));
    ockelm().args(["fit", "t.csv", "--sigma", "1", "--C", "10", "--out", "m.json"]).assert().code(2);
    ockelm().arg("bogus").assert().code(2);
    ockelm().arg("--help").assert().code(0);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    ockelm()
        .args(["split", "does-not-exist.csv", "--target", "a", "--out-dir"])
        .arg(dir.path())
        .assert()
        .code(1);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,NaN\n").unwrap();
    ockelm()
        .args(["fit", bad.to_str().unwrap(), "--kernel", "rbf", "--sigma", "1", "--C", "1", "--out"])
        .arg(dir.path().join("m.json"))
        .assert()
        .code(1)
        .stderr(contains("row 1").and(contains("b")));
}

fn iris_model(dir: &std::path::Path, extra: &[&str]) -> std::path::PathBuf {
    ockelm()
        .args(["split", uci("iris.csv").to_str().unwrap(), "--target", "setosa", "--out-dir"])
        .arg(dir)
        .assert()
        .success();
    let model = dir.join("model.json");
    ockelm()
        .arg("fit")
        .arg(dir.join("train.csv"))
        .args(["--sigma", "4", "--T", "2", "--C", "10", "--out"])
        .arg(&model)
        .args(extra)
        .assert()
        .success();
    model
}

#[test]
fn predict_writes_scores_and_respects_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let model = iris_model(dir.path(), &["--ica"]);
    let scores = dir.path().join("scores.csv");
    ockelm().arg("predict").arg(&model).arg(dir.path().join("train.csv")).arg("--out").arg(&scores).assert().success();
    let text = read(&scores);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("output,error,label"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 25);
    for r in &rows {
        assert_eq!(r[1], (r[0] - 1.0).abs());
    }
    let flagged = rows.iter().filter(|r| r[2] == -1.0).count();
    // ⌈0.01 · 25⌉ = 1, plus rows tied at the threshold
    let worst = rows.iter().map(|r| r[1]).fold(f64::MIN, f64::max);
    let ties = rows.iter().filter(|r| r[1] == worst).count();
    assert!((1..1 + ties).contains(&flagged), "{flagged}");
}

#[test]
fn predict_rejects_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let model = iris_model(dir.path(), &[]);
    let wide = dir.path().join("wide.csv");
    std::fs::write(&wide, "a,b,c\n1,2,3\n").unwrap();
    ockelm()
        .arg("predict")
        .arg(&model)
        .arg(&wide)
        .arg("--out")
        .arg(dir.path().join("s.csv"))
        .assert()
        .code(1)
        .stderr(contains("d = 4"));
}

#[test]
fn eval_reports_hyperparameters_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let model = iris_model(dir.path(), &["--seed", "9"]);
    let report = dir.path().join("report.json");
    ockelm()
        .arg("eval")
        .arg(&model)
        .arg(dir.path().join("test.csv"))
        .arg("--out")
        .arg(&report)
        .assert()
        .success()
        .stdout(contains("f1 "));
    let r: serde_json::Value = serde_json::from_str(&read(&report)).unwrap();
    assert_eq!(r["seed"], 9);
    let hp = &r["hyperparameters"];
    assert_eq!(hp["c"], 10.0);
    assert_eq!(hp["theta"], 0.01);
    assert_eq!(hp["kernel"]["sigma"], 4.0);
    assert_eq!(hp["kernel"]["kind"]["triangle"], 2.0);
    assert_eq!(hp["kernel"]["kind"]["type"], "tgak");
    let counts: u64 = ["tp", "fp", "fn", "tn"].iter().map(|k| r[k].as_u64().unwrap()).sum();
    assert_eq!(counts, 75);
    assert!(r["f1"].as_f64().unwrap() > 0.8);
}

#[test]
fn model_file_rejects_other_versions() {
    let dir = tempfile::tempdir().unwrap();
    let model = iris_model(dir.path(), &[]);
    let text = read(&model).replacen("\"format_version\": 1", "\"format_version\": 7", 1);
    std::fs::write(&model, text).unwrap();
    ockelm()
        .arg("eval")
        .arg(&model)
        .arg(dir.path().join("test.csv"))
        .assert()
        .code(1)
        .stderr(contains("format_version 7"));
}

#[test]
fn full_grid_has_2431_cells() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let pool = dir.path().join("pool.csv");
    let mut t = String::from("a,b\n");
    for i in 0..10 {
        t.push_str(&format!("{},{}\n", (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()));
    }
    std::fs::write(&train, t).unwrap();
    std::fs::write(&pool, "a,b,label\n3,3,-1\n-3,2,-1\n").unwrap();
    let cells = dir.path().join("cells.csv");
    ockelm()
        .arg("gridsearch")
        .arg(&train)
        .arg(&pool)
        .args(["--grid", "full", "--out"])
        .arg(&cells)
        .assert()
        .success();
    let text = read(&cells);
    assert_eq!(text.lines().next(), Some("T,C,sigma,fold_f1s,mean_f1"));
    assert_eq!(text.lines().count(), 1 + 2431);
    ockelm()
        .arg("gridsearch")
        .arg(&train)
        .arg(&pool)
        .args(["--grid", "coarse", "--kernel", "rbf", "--out"])
        .arg(&cells)
        .assert()
        .success();
    assert_eq!(read(&cells).lines().count(), 1 + 6 * 7);
}

#[test]
fn pool_with_targets_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let pool = dir.path().join("pool.csv");
    std::fs::write(&train, "a\n1\n2\n3\n4\n5\n6\n").unwrap();
    std::fs::write(&pool, "a,label\n9,-1\n1,1\n").unwrap();
    ockelm()
        .arg("gridsearch")
        .arg(&train)
        .arg(&pool)
        .args(["--grid", "coarse", "--out"])
        .arg(dir.path().join("c.csv"))
        .assert()
        .code(1)
        .stderr(contains("row 2"));
}

#[test]
fn resample_labels_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_flight(dir.path(), 1, 20.0, Some(12.1));
    let out = dir.path().join("data.csv");
    ockelm().arg("resample").arg(&manifest).arg("--out").arg(&out).assert().success();
    let text = read(&out);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 19);
    assert_eq!(header[0], "velocity_x");
    assert_eq!(header[18], "label");
    let labels: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    // 12.1 s of 0.25 s buckets before the fault, 7.9 s after
    assert_eq!(labels.iter().filter(|&&l| l == "1").count(), 49);
    assert_eq!(labels.iter().filter(|&&l| l == "-1").count(), 32);
    assert!(labels.windows(2).all(|w| !(w[0] == "-1" && w[1] == "1")));

    let calm = write_flight(dir.path(), 2, 5.0, None);
    ockelm().arg("resample").arg(&calm).arg("--out").arg(&out).assert().success();
    assert!(read(&out).lines().skip(1).all(|l| l.ends_with(",1")));

    let text = read(&calm).lines().filter(|l| !l.starts_with("airspeed_error")).collect::<Vec<_>>().join("\n");
    std::fs::write(&calm, text).unwrap();
    ockelm().arg("resample").arg(&calm).arg("--out").arg(&out).assert().code(1).stderr(contains("airspeed_error"));
}

#[test]
fn gridsearch_model_out_records_cell() {
    let dir = tempfile::tempdir().unwrap();
    ockelm()
        .args(["split", uci("iris.csv").to_str().unwrap(), "--target", "versicolor", "--seed", "2", "--out-dir"])
        .arg(dir.path())
        .assert()
        .success();
    let model = dir.path().join("best.json");
    let summary = dir.path().join("summary.json");
    ockelm()
        .arg("gridsearch")
        .arg(dir.path().join("train.csv"))
        .arg(dir.path().join("cvpool.csv"))
        .args(["--grid", "coarse", "--seed", "2", "--out"])
        .arg(dir.path().join("cells.csv"))
        .arg("--summary")
        .arg(&summary)
        .arg("--model-out")
        .arg(&model)
        .assert()
        .success();
    let m: serde_json::Value = serde_json::from_str(&read(&model)).unwrap();
    let s: serde_json::Value = serde_json::from_str(&read(&summary)).unwrap();
    let cell = &m["provenance"]["grid_cell"];
    assert_eq!(cell["grid"], "coarse");
    assert_eq!(cell["C"], s["best"]["c"]);
    assert_eq!(cell["T"], s["best"]["triangle"]);
    assert_eq!(m["C"], s["best"]["c"]);
    assert_eq!(m["provenance"]["seed"], 2);
    assert_eq!(m["provenance"]["dataset_sha256"].as_str().unwrap().len(), 64);
}
