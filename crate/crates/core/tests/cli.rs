//! End-to-end checks of the command-line interface: exit codes, TSV
//! output shapes, and the ingest/train/evaluate/predict pipeline.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curvtkg"))
}

fn write_toy_dataset(dir: &Path) {
    let quads = curvtkg::synth::tree_growth(12, 2, 8, 4);
    let write = |name: &str, lo: u32, hi: u32| {
        let rows: String = quads
            .iter()
            .filter(|q| q.t >= lo && q.t < hi)
            .map(|q| format!("{}\t{}\t{}\t{}\n", q.s, q.r, q.o, q.t))
            .collect();
        std::fs::write(dir.join(name), rows).unwrap();
    };
    write("train.txt", 0, 6);
    write("valid.txt", 6, 7);
    write("test.txt", 7, 8);
    std::fs::write(dir.join("stat.txt"), "12\t2\n").unwrap();
}

fn stdout_rows(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| l.split('\t').map(str::to_owned).collect())
        .collect()
}

#[test]
fn usage_errors_exit_with_code_one() {
    let out = bin().arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["train", "--out", "/tmp"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "missing --data should be a usage error");
    let out = bin().args(["evaluate", "--checkpoint", "x", "--history", "psychic"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_with_code_two() {
    let out = bin()
        .args(["stats", "--data", "/nonexistent/curvtkg-cli-test"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn pipeline_ingest_train_evaluate_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    write_toy_dataset(&data);

    let out = bin()
        .args(["ingest", "--out"])
        .arg(dir.path().join("bundle"))
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_rows(&out);
    let get = |key: &str| {
        rows.iter().find(|r| r[0] == key).map(|r| r[1].clone()).expect(key)
    };
    assert_eq!(get("entities"), "12");
    assert_eq!(get("relations"), "2");
    assert_eq!(get("timestamps"), "8");
    assert!(dir.path().join("bundle/bundle.bin").is_file());

    let out = bin()
        .args(["stats", "--data"])
        .arg(dir.path().join("bundle/bundle.bin"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows = stdout_rows(&out);
    assert_eq!(rows[0], ["t", "khs", "c"]);
    assert_eq!(rows.last().unwrap()[0], "mean");
    // every snapshot of the growing tree is fully unreciprocated
    assert!(rows[1..].iter().all(|r| r[1] == "1.000000"));

    let run = dir.path().join("run");
    let out = bin()
        .args([
            "train", "--seed", "7", "--epochs", "2", "--dim", "8", "--window", "4", "--lr",
            "1e-2", "--out",
        ])
        .arg(&run)
        .arg("--data")
        .arg(dir.path().join("bundle"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(run.join("train_log.tsv")).unwrap();
    assert!(log.starts_with("epoch\tloss\tval_mrr\n"));
    assert_eq!(log.lines().count(), 3);

    let out = bin()
        .args(["evaluate", "--history", "oracle", "--checkpoint"])
        .arg(run.join("checkpoint.bin"))
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_rows(&out);
    let metrics: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(metrics, ["mrr", "hits1", "hits3", "hits10", "count"]);
    let mrr: f64 = rows[0][1].parse().unwrap();
    assert!(mrr > 0.0 && mrr <= 1.0);

    let out = bin()
        .args(["predict", "--query", "0 0 ? 7", "--topk", "5", "--checkpoint"])
        .arg(run.join("checkpoint.bin"))
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = stdout_rows(&out);
    assert_eq!(rows[0], ["rank", "entity", "score"]);
    assert_eq!(rows.len(), 6);
    let scores: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "scores must be sorted");

    // epochs 0 still writes a valid initial checkpoint
    let init = dir.path().join("init");
    let out = bin()
        .args(["train", "--epochs", "0", "--dim", "4", "--out"])
        .arg(&init)
        .arg("--data")
        .arg(&data)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(init.join("checkpoint.bin").is_file());
}

#[test]
fn gradcheck_reports_both_backends() {
    let out = bin().arg("gradcheck").output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("poincare") && text.contains("lorentz"));
    assert_eq!(text.matches("PASS").count(), 2);
}

#[test]
fn data_root_falls_back_to_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_dataset(dir.path());
    let out = bin()
        .arg("stats")
        .env("CURVTKG_DATA", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
