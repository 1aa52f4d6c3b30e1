use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rhomb::orbit::store::parse_store;

fn rhomb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhomb"))
        .args(args)
        .current_dir(dir)
        .env_remove("RHOMB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn find_orbit_writes_a_store_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhomb(dir.path(), &["find-orbit", "--m", "1.0", "--store", "o.db"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).starts_with("m=1.0000000000000000e0 zeta=2.79163432"));
    let recs = parse_store(&fs::read_to_string(dir.path().join("o.db")).unwrap()).unwrap();
    assert_eq!(recs.len(), 1);
    assert!(recs[0].period_residual < 1e-8);

    let out = rhomb(
        dir.path(),
        &[
            "find-orbit",
            "--m",
            "0.98",
            "--seed",
            "o.db",
            "--store",
            "o.db",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).starts_with("seed m=1.0000000000000000e0\n"));
    let recs = parse_store(&fs::read_to_string(dir.path().join("o.db")).unwrap()).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1].m.get(), 0.98);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["find-orbit", "--m", "0"][..],
        &["find-orbit"],
        &["find-orbit", "--m", "0.5", "--seed", "missing.db"],
        &["sweep", "--from", "0.4", "--to", "0.4"],
        &["poincare", "--m", "1.0", "--r-min", "1.5"],
        &["poincare", "--m", "1.0", "--theta-count", "0"],
        &["simulate", "--m", "1.0", "--state", "1,2,3"],
        &["no-such-command"],
    ] {
        let out = rhomb(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn alpha_only_prints_alpha_and_r_max() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhomb(dir.path(), &["poincare", "--m", "1.0", "--alpha-only"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    let rest = text
        .trim_end()
        .strip_prefix("alpha=1.0000000000000000e0 r_max=")
        .unwrap();
    let r_max: f64 = rest.parse().unwrap();
    assert!((r_max - (1.0 + 2.0 * 2f64.sqrt())).abs() < 1e-14);
}

#[test]
fn config_file_supplies_values_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.cfg"),
        "format = rhomb-run/1\nm = 1.0\n",
    )
    .unwrap();
    let from_file = rhomb(
        dir.path(),
        &["--config", "run.cfg", "poincare", "--alpha-only"],
    );
    assert!(stdout(&from_file).starts_with("alpha=1.0000000000000000e0"));
    let flag = rhomb(
        dir.path(),
        &[
            "--config",
            "run.cfg",
            "poincare",
            "--alpha-only",
            "--m",
            "0.5",
        ],
    );
    assert!(!stdout(&flag).starts_with("alpha=1.0000000000000000e0"));

    fs::write(
        dir.path().join("bad.cfg"),
        "format = rhomb-run/1\nmass = 1.0\n",
    )
    .unwrap();
    let bad = rhomb(
        dir.path(),
        &["--config", "bad.cfg", "poincare", "--alpha-only"],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rhomb"))
        .args(["poincare", "--m", "1.0", "--alpha-only"])
        .current_dir(dir.path())
        .env("RHOMB_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let ok = Command::new(env!("CARGO_BIN_EXE_rhomb"))
        .args(["poincare", "--m", "1.0", "--alpha-only"])
        .current_dir(dir.path())
        .env("RHOMB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn small_poincare_grid_emits_one_row_per_crossing() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "poincare",
        "--m",
        "1.0",
        "--r-count",
        "2",
        "--r-min",
        "0.5",
        "--r-max",
        "0.7",
        "--theta-count",
        "2",
        "--theta-min",
        "-1.0",
        "--theta-max",
        "-0.6",
        "--max-crossings",
        "10",
        "--output",
        "sec.csv",
    ];
    let out = rhomb(dir.path(), &args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("sec.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("seed_r,seed_theta,crossing_index,r,theta,escaped_flag")
    );
    assert_eq!(lines.count(), 40);
    let summary = stdout(&out);
    assert_eq!(
        summary.matches("crossings_found=10 escaped=false").count(),
        4
    );
    assert!(summary.contains("reached_max_crossings=4 rows=40"));
}

#[test]
fn sweep_is_deterministic_and_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep", "--from", "0.405", "--to", "0.395", "--dm", "0.005", "--output", "a.csv",
    ];
    let out = rhomb(dir.path(), &args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("lambda_zero_brackets=(0.395,0.4)"));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let mut args_b = args;
    args_b[8] = "b.csv";
    rhomb(dir.path(), &args_b);
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| !l.contains('\r')));
}

#[test]
fn continue_stores_every_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhomb(
        dir.path(),
        &[
            "continue", "--from", "1.0", "--to", "0.98", "--dm", "0.01", "--store", "c.db",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 3);
    let recs = parse_store(&fs::read_to_string(dir.path().join("c.db")).unwrap()).unwrap();
    let ms: Vec<f64> = recs.iter().map(|r| r.m.get()).collect();
    assert_eq!(ms, vec![1.0, 0.99, 0.98]);
}

#[test]
fn simulate_dumps_a_conserving_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhomb(dir.path(), &["simulate", "--m", "1.0", "--samples", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,q1,q2,p1,p2,gamma"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r[5].abs() < 1e-9));
    assert!((rows[10][1] - rows[0][1]).abs() < 1e-8);
}

#[test]
fn verify_reports_json_and_detects_broken_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let out = rhomb(dir.path(), &["verify", "--m", "1.0", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], serde_json::Value::Bool(true));
    assert!(v["items"].as_array().unwrap().len() > 10);

    let out = rhomb(dir.path(), &["verify", "--m", "1.0", "--break-symmetry"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text
        .lines()
        .any(|l| l.starts_with("FAIL orbit.symmetry m=1")));
    assert_eq!(text.matches("FAIL").count(), 1);
}
