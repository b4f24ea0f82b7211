use std::path::Path;
use std::process::{Command, Output};

use ckan::data::{write_idx_images, write_idx_labels, MNIST_FILES};

fn ckan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ckan"))
        .args(args)
        .env_remove("CKAN_MNIST_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no '{key}' in {out}"))
        .to_string()
}

/// Writes a tiny digit-like IDX set: class `k` lights rows `2k..2k+3`.
fn write_fixture(dir: &Path, n_train: usize, n_test: usize) {
    let make = |n: usize, salt: usize| {
        let mut px = vec![0u8; n * 784];
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        for (i, &k) in labels.iter().enumerate() {
            for r in 2 * k as usize + 3..2 * k as usize + 6 {
                for c in 4..24 {
                    px[i * 784 + r * 28 + c] = 200 + ((i * 7 + c + salt) % 50) as u8;
                }
            }
        }
        (px, labels)
    };
    let (px, lb) = make(n_train, 0);
    write_idx_images(&dir.join(MNIST_FILES[0]), 28, 28, &px).unwrap();
    write_idx_labels(&dir.join(MNIST_FILES[1]), &lb).unwrap();
    let (px, lb) = make(n_test, 3);
    write_idx_images(&dir.join(MNIST_FILES[2]), 28, 28, &px).unwrap();
    write_idx_labels(&dir.join(MNIST_FILES[3]), &lb).unwrap();
}

#[test]
fn count_alexnet_is_exact() {
    let o = ckan(&["count", "--model", "alexnet"]);
    assert!(o.status.success());
    assert_eq!(value(&stdout(&o), "params"), "61100840");
}

#[test]
fn count_lenet_is_close_to_reference() {
    let o = ckan(&["count", "--model", "lenet"]);
    assert!(o.status.success());
    let params: f64 = value(&stdout(&o), "params").parse().unwrap();
    assert!((params - 61750.0).abs() / 61750.0 <= 0.005, "{params}");
}

#[test]
fn count_kan_uses_basis_flags() {
    let o = ckan(&["count", "--model", "lenet-kan", "--basis", "bspline", "--grid", "5", "--degree", "3"]);
    assert_eq!(value(&stdout(&o), "params"), "45057");
    let o = ckan(&["count", "--model", "lenet-kan", "--basis", "rbf", "--grid", "4"]);
    assert_eq!(value(&stdout(&o), "params"), "28697");
}

#[test]
fn bad_usage_exits_one() {
    let o = ckan(&["count", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
    assert_eq!(ckan(&["count", "--model", "resnet"]).status.code(), Some(1));
    assert_eq!(ckan(&["count", "--model", "lenet-kan", "--grid", "0"]).status.code(), Some(1));
    assert_eq!(ckan(&["sweep", "--config", "/nonexistent/sweep.kv"]).status.code(), Some(1));
    assert_eq!(ckan(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_data_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("absent");
    let o = ckan(&["train", "--model", "lenet", "--data", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_prune_and_profile_a_tabular_model() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = tmp.path().join("ckpt");
    let c = ckpt.to_str().unwrap();
    let o = ckan(&[
        "train", "--model", "tabular-ckan", "--basis", "rbf", "--grid", "4", "--data", "synthetic",
        "--features", "24", "--labels", "4", "--epochs", "2", "--batch", "64", "--out", c,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(value(&out, "val_loss").parse::<f64>().unwrap().is_finite());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ckpt.join("report.json")).unwrap()).unwrap();
    assert!(report.get("val_loss").is_some());

    let pruned = tmp.path().join("pruned");
    let o = ckan(&[
        "prune", "--checkpoint", c, "--ratio", "0.25", "--finetune-epochs", "1", "--data", "synthetic",
        "--out", pruned.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = value(&stdout(&o), "params");
    let (a, b) = line.split_once(" -> ").unwrap();
    assert!(b.parse::<usize>().unwrap() < a.parse::<usize>().unwrap());

    let o = ckan(&["profile", "--checkpoint", pruned.to_str().unwrap(), "--batch", "4", "--warmup", "1", "--iters", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "params"), b);
}

#[test]
fn small_sweep_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("mnist");
    std::fs::create_dir(&data).unwrap();
    write_fixture(&data, 200, 50);
    let cfg = tmp.path().join("sweep.kv");
    std::fs::write(&cfg, "g = 4,8\nw = 1\nrelu = on\np = 0,0.25\nepochs = 2\nbatch = 32\nlatency_batch = 4\nlatency_warmup = 1\nlatency_iters = 30\n").unwrap();
    let out_dir = tmp.path().join("out");
    let o = ckan(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out-dir",
        out_dir.to_str().unwrap(), "--subset", "100",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "cells"), "4");

    let mut rd = csv::Reader::from_path(out_dir.join("runs.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[..4], ["g", "w", "relu", "p"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[10] == "ok"));
    let col = |r: &csv::StringRecord, i: usize| r[i].parse::<f64>().unwrap();
    // Rows are in grid order: (g=4,p=0), (g=4,p=.25), (g=8,p=0), (g=8,p=.25).
    assert!(col(&rows[1], 6) < col(&rows[0], 6) && col(&rows[1], 7) < col(&rows[0], 7));
    assert!(col(&rows[2], 7) > col(&rows[0], 7));
    for f in ["frontier.csv", "radar.csv", "summary.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"], 4);
    assert_eq!(summary["failed"], 0);
}
