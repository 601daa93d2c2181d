use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_imap");

fn run(args: &[&str]) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "imap {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Every file under `a` exists under `b` with the same bytes.
fn assert_same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(!names.is_empty(), "no outputs in {}", a.display());
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        assert_eq!(
            fs::read(&pa).unwrap(),
            fs::read(&pb).unwrap(),
            "{} differs",
            pa.display()
        );
    }
}

/// Runs `args` twice with `--out` pointing at `first` and `second`, then
/// compares the outputs.
fn twice(tmp: &Path, tag: &str, args: &[&str], dir_output: bool) {
    let mut outs = Vec::new();
    for i in 0..2 {
        let out = tmp.join(format!("{tag}-{i}"));
        let out_str = if dir_output {
            out.to_str().unwrap().to_string()
        } else {
            fs::create_dir_all(&out).unwrap();
            out.join("out").to_str().unwrap().to_string()
        };
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", &out_str]);
        run(&full);
        outs.push(out);
    }
    assert_same_tree(&outs[0], &outs[1]);
}

#[test]
fn every_command_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();

    let ungm = write(
        t,
        "ungm.json",
        r#"{"system": "ungm", "horizon": 30, "method": "pf", "particles": 200, "runs": 4}"#,
    );
    let ungm = ungm.to_str().unwrap();
    twice(
        t,
        "simulate",
        &["simulate", "--config", ungm, "--seed", "7"],
        false,
    );

    let traj = t.join("traj.csv");
    run(&[
        "simulate",
        "--config",
        ungm,
        "--seed",
        "7",
        "--out",
        traj.to_str().unwrap(),
    ]);
    twice(
        t,
        "filter",
        &[
            "filter",
            "--config",
            ungm,
            "--seed",
            "7",
            "--trajectory",
            traj.to_str().unwrap(),
        ],
        false,
    );

    twice(
        t,
        "bench",
        &[
            "bench",
            "--config",
            ungm,
            "--seed",
            "3",
            "--runs",
            "4",
            "--threads",
            "2",
        ],
        true,
    );

    let grid = write(
        t,
        "grid.json",
        r#"{
            "system": "ungm", "horizon": 30, "method": "ukf", "runs": 3, "validation_runs": 2,
            "grid": {"grid": "cells", "cells": [
                {"method": "imap", "optimizer": {"kind": "adam", "learning_rate": 0.1, "beta1": 0.1, "beta2": 0.1}, "steps": 10},
                {"method": "imap", "optimizer": {"kind": "gd", "learning_rate": 0.1}, "steps": 3},
                {"method": "ukf"}
            ]}
        }"#,
    );
    twice(
        t,
        "grid",
        &[
            "gridsearch",
            "--config",
            grid.to_str().unwrap(),
            "--seed",
            "1",
        ],
        true,
    );

    twice(
        t,
        "verify",
        &["verify-equivalence", "--runs", "20", "--seed", "5"],
        false,
    );

    let drift = write(
        t,
        "drift.json",
        r#"{"task": {"horizon": 6}, "seeds": 2, "imap_steps": [1, 10], "vkf_sigma2": [0.01], "pf_sigma2": [0.01],
            "adaptation": {"particles": 50, "direct_fit_steps": 50, "vkf_steps": 50}}"#,
    );
    twice(
        t,
        "drift",
        &[
            "driftbench",
            "--config",
            drift.to_str().unwrap(),
            "--seed",
            "2",
        ],
        true,
    );
}

#[test]
fn bench_outputs_follow_the_table_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"system": "ungm", "horizon": 20, "method": "ukf", "runs": 3}"#,
    );
    let out = tmp.path().join("o");
    run(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("method,param_string,rmse_mean,rmse_ci,diverged")
    );
    assert!(lines.next().unwrap().starts_with("ukf,"));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4);
}

#[test]
fn bad_configuration_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        r#"{"system": "ungm", "method": "pf", "particles": 0}"#,
    );
    let out = Command::new(BIN)
        .args([
            "bench",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
