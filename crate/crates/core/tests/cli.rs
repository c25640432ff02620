//! End-to-end tests of the CLI binary: exit codes, CSV shape, determinism.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homogsim"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("homogsim-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str], out: &PathBuf) -> Output {
    let output = bin()
        .args(["--out", out.to_str().unwrap()])
        .args(args)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Splits a CSV into (config comment, header, data rows), checking the shape
/// every file is supposed to have.
fn read_csv(path: &PathBuf) -> (String, String, Vec<String>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(str::to_owned);
    let comment = lines.next().unwrap();
    assert!(comment.starts_with("# config: {"), "missing config comment");
    let mut header = lines.next().unwrap();
    // solve-user carries extra threshold comments before the header.
    let mut extra = Vec::new();
    while header.starts_with('#') {
        extra.push(header);
        header = lines.next().unwrap();
    }
    (comment, header, lines.collect())
}

#[test]
fn solve_user_regimes_in_order_and_deterministic() {
    let d1 = tmp_dir("su1");
    let d2 = tmp_dir("su2");
    let args = [
        "solve-user",
        "--theta-min",
        "0",
        "--theta-max",
        "6",
        "--steps",
        "61",
        "--gamma",
        "1",
        "--cap-gamma",
        "1.4",
    ];
    run_ok(&args, &d1);
    run_ok(&args, &d2);

    let p1 = d1.join("solve_user.csv");
    let p2 = d2.join("solve_user.csv");
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap(), "rerun differs");

    let (_, header, rows) = read_csv(&p1);
    assert_eq!(
        header,
        "theta,uniqueness,regime,w_star,sigma_star,fidelity_error,comm_cost,utility_loss,expected_output"
    );
    assert_eq!(rows.len(), 61);

    // Walking away from the AI mean, regimes must appear in the fixed order
    // default -> interactive -> manual with no going back.
    let rank = |r: &str| match r {
        "default" => 0,
        "interactive" => 1,
        "manual" => 2,
        other => panic!("unknown regime {other:?}"),
    };
    let ranks: Vec<i32> = rows
        .iter()
        .map(|row| rank(row.split(',').nth(2).unwrap()))
        .collect();
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "regimes out of order: {ranks:?}");
    assert!(ranks.first() == Some(&0) && ranks.last() == Some(&2), "{ranks:?}");
}

#[test]
fn sweep_gamma_variance_strictly_decreasing() {
    let dir = tmp_dir("sweep");
    run_ok(
        &["sweep", "--axis", "gamma", "--values", "0.25,0.5,1,2,4"],
        &dir,
    );
    let (_, header, rows) = read_csv(&dir.join("sweep_gamma.csv"));
    let cols: Vec<&str> = header.split(',').collect();
    assert_eq!(cols[0], "gamma");
    let var_idx = cols
        .iter()
        .position(|c| *c == "variance_output")
        .expect("variance_output column");
    let vars: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(var_idx).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vars.len(), 5);
    assert!(
        vars.windows(2).all(|w| w[1] < w[0]),
        "variance not strictly decreasing in gamma: {vars:?}"
    );
}

#[test]
fn sweep_empty_values_is_an_error() {
    let dir = tmp_dir("sweep-empty");
    let output = bin()
        .args(["--out", dir.to_str().unwrap()])
        .args(["sweep", "--axis", "gamma"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error"), "stderr: {stderr}");
    assert!(!dir.join("sweep_gamma.csv").exists());
}

#[test]
fn unknown_axis_is_an_error() {
    let dir = tmp_dir("axis");
    let output = bin()
        .args(["--out", dir.to_str().unwrap()])
        .args(["sweep", "--axis", "bogus", "--values", "1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn loop_csv_shape_and_determinism() {
    let d1 = tmp_dir("loop1");
    let d2 = tmp_dir("loop2");
    let args = [
        "loop",
        "--iterations",
        "4",
        "--m",
        "31",
        "--m-q",
        "121",
        "--snapshots",
    ];
    run_ok(&args, &d1);
    run_ok(&args, &d2);

    let p1 = d1.join("loop.csv");
    assert_eq!(
        fs::read(&p1).unwrap(),
        fs::read(d2.join("loop.csv")).unwrap(),
        "loop rerun differs"
    );
    let (_, header, rows) = read_csv(&p1);
    assert_eq!(header, "t,variance,mean,mass_at_default,fraction_manual");
    assert_eq!(rows.len(), 5); // t = 0..=4

    let (_, pheader, prows) = read_csv(&d1.join("loop_priors.csv"));
    assert_eq!(pheader, "t,support,mass");
    assert_eq!(prows.len(), 5 * 31);
}

#[test]
fn three_point_frozen_sigma_monotone() {
    let dir = tmp_dir("tp");
    run_ok(
        &[
            "three-point",
            "--frozen-sigma",
            "1",
            "--iterations",
            "50",
        ],
        &dir,
    );
    let (_, header, rows) = read_csv(&dir.join("three_point.csv"));
    let cols: Vec<&str> = header.split(',').collect();
    let p_idx = cols.iter().position(|c| *c == "p").expect("p column");
    let ps: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(p_idx).unwrap().parse().unwrap())
        .collect();
    assert!(
        ps.windows(2).all(|w| w[1] >= w[0]),
        "frozen-sigma mass not monotone: {ps:?}"
    );
}

#[test]
fn bad_config_file_is_an_error() {
    let dir = tmp_dir("badcfg");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, "{ not json").unwrap();
    let output = bin()
        .args(["--config", cfg.to_str().unwrap()])
        .args(["--out", dir.to_str().unwrap()])
        .args(["solve-user", "--theta-min", "0", "--theta-max", "1", "--steps", "2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}
