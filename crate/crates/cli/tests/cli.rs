use std::path::Path;
use std::process::{Command, Output};

use cableperc::estimators::RunRecord;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cableperc"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn validate_passes_on_a_fresh_checkout() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let recs = RunRecord::read_jsonl(&dir.path().join("runs.jsonl")).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(recs[0].checks.iter().all(|c| c.passed));
}

#[test]
fn two_point_csv_has_one_row_per_displacement() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["two-point", "--d", "3", "--side", "16", "--samples", "3", "--set", "grid=1,2,3,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("two-point.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("series,x,value"));
}

#[test]
fn reruns_reproduce_tallies_and_append() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["cluster-tail", "--d", "3", "--side", "8", "--samples", "4", "--seed", "9", "--set", "grid=1,2,4"];
    assert_eq!(run(dir.path(), &args).status.code(), Some(0));
    let mut with_workers = args.to_vec();
    with_workers.extend(["--workers", "3"]);
    assert_eq!(run(dir.path(), &with_workers).status.code(), Some(0));
    let recs = RunRecord::read_jsonl(&dir.path().join("runs.jsonl")).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].tallies(), recs[1].tallies());
}

#[test]
fn config_errors_exit_2_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["volume", "--set", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "config");

    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "side = 5\nside = 6\n").unwrap();
    let out = run(dir.path(), &["volume", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(dir.path(), &["volume", "--side", "400", "--set", "memory_budget=1000000"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "memory_budget");
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# small run\nd = 2\nside = 6\nsamples = 2\n").unwrap();
    let out = run(dir.path(), &["sample-gff", "--config", cfg.to_str().unwrap(), "--samples", "3", "--svg"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = RunRecord::read_jsonl(&dir.path().join("runs.jsonl")).unwrap();
    assert_eq!((recs[0].config.side, recs[0].config.samples), (6, 3));
    for ext in ["gff", "edges", "csv", "svg", "config"] {
        assert!(dir.path().join(format!("sample-gff.{ext}")).exists(), "{ext}");
    }
    let written = std::fs::read_to_string(dir.path().join("sample-gff.config")).unwrap();
    let back = cableperc::estimators::ExperimentConfig::parse(&written).unwrap();
    assert_eq!(back, recs[0].config);
}
