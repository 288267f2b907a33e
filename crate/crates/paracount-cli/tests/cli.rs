//! End-to-end tests of the binary: subcommands, formats, exit codes, and
//! byte-level determinism of the emitted reports.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paracount"))
}

fn write_config(dir: &std::path::Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "paracount-cli-test-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn error_grid_csv_shape_and_exit_zero() {
    let dir = tempdir();
    let cfg = write_config(&dir, "grid.conf", "a_grid = 2\nb_rule = fixed 2\n");
    let out = run_ok(&["error-grid", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let header = lines
        .iter()
        .position(|l| l.starts_with("instance_id,"))
        .expect("header row present");
    assert_eq!(
        lines[header],
        "instance_id,alpha,beta,gamma,a,b,delta,H,quantity,computed,envelope,ratio,pass"
    );
    // one cell, six checks
    assert_eq!(lines.len() - header - 1, 6);
    assert!(text.contains("second_moment_identity"));
    assert!(lines[..header].iter().all(|l| l.starts_with("# fitted_constant")));
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempdir();
    let cfg = write_config(
        &dir,
        "grid.conf",
        "a_grid = random 6 in 2..60 den 12, 7..12\nb_rule = proportional 3/2\nseed = 11\n",
    );
    let one = run_ok(&[
        "error-grid",
        "--config",
        cfg.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    let four = run_ok(&[
        "error-grid",
        "--config",
        cfg.to_str().unwrap(),
        "--threads",
        "4",
    ]);
    assert_eq!(one.stdout, four.stdout);
    let again = run_ok(&[
        "error-grid",
        "--config",
        cfg.to_str().unwrap(),
        "--threads",
        "4",
    ]);
    assert_eq!(four.stdout, again.stdout);
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempdir();
    let cfg = write_config(
        &dir,
        "grid.conf",
        "a_grid = random 4 in 2..50 den 9\nseed = 1\nchecks = envelope-only\n",
    );
    let default_run = run_ok(&["error-grid", "--config", cfg.to_str().unwrap()]);
    let overridden = run_ok(&[
        "error-grid",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "2",
    ]);
    assert_ne!(default_run.stdout, overridden.stdout);
    let same_seed = run_ok(&[
        "error-grid",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    assert_eq!(default_run.stdout, same_seed.stdout);
}

#[test]
fn near_grid_json_is_valid() {
    let dir = tempdir();
    let cfg = write_config(
        &dir,
        "near.conf",
        "a_grid = 2\nb_rule = fixed 4\ndelta_grid = 1/4\n",
    );
    let out = run_ok(&[
        "near-grid",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert!(rows.iter().any(|r| r["quantity"] == "near_count"));
    assert!(rows.iter().any(|r| r["quantity"] == "erdos_turan_discrepancy"));
    assert!(rows.iter().all(|r| r["pass"] == true));
}

#[test]
fn extremal_writes_sorted_rows_to_file() {
    let dir = tempdir();
    let cfg = write_config(&dir, "ex.conf", "a_min = 16\na_max = 64\ntop_k = 5\n");
    let out_path = dir.join("extremal.csv");
    run_ok(&[
        "extremal",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&out_path).unwrap();
    let ratios: Vec<f64> = text
        .lines()
        .filter(|l| l.contains(",extremal_normalized_error,"))
        .map(|l| l.split(',').nth(11).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 5);
    assert!(ratios.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn prove_chain_json_carries_series_pairs() {
    let dir = tempdir();
    let cfg = write_config(&dir, "chain.conf", "a_grid = 25\n");
    let out = run_ok(&[
        "prove-chain",
        "--config",
        cfg.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["x_max"], 25);
    let series = v["chain"]["series"].as_array().unwrap();
    assert_eq!(series.len(), v["h_cutoff"].as_u64().unwrap() as usize);
    assert_eq!(series[0].as_array().unwrap().len(), 2);
    // and the csv rendering lists the raw quantities
    let csv = run_ok(&["prove-chain", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8(csv.stdout).unwrap();
    for q in ["floor_sum", "psi_sum", "resonance_q", "vaaler_psi_bound"] {
        assert!(text.contains(q), "missing {q}");
    }
}

#[test]
fn config_errors_exit_two() {
    let dir = tempdir();
    let bad = write_config(&dir, "bad.conf", "a_grid = 1\n");
    let out = bin()
        .args(["error-grid", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let missing = dir.join("does-not-exist.conf");
    let out = bin()
        .args(["error-grid", "--config", missing.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let unknown = write_config(&dir, "unknown.conf", "does_not_exist = 1\n");
    let out = bin()
        .args(["near-grid", "--config", unknown.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_cell_exits_one() {
    // floor(b) past the 64-bit range is recorded as a failed cell, and the
    // run keeps going (the second cell still reports).
    let dir = tempdir();
    let cfg = write_config(
        &dir,
        "huge.conf",
        "a_grid = 2, 3\nb_rule = fixed 100000000000000000000\nchecks = envelope-only\n",
    );
    let out = bin()
        .args(["error-grid", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches(",cell_error,").count(), 2);
}
