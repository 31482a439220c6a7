//! End-to-end runs of the `wpdc` binary.

use std::path::Path;
use std::process::{Command, Output};

fn wpdc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpdc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 6] = [
    "--set",
    "grid.n_pairs=6",
    "--set",
    "ensemble.realizations=400",
    "--set",
    "detector.window=10",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(SMALL);
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = wpdc(dir.path(), &["validate"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stderr(&ok).is_empty());

    let warn = wpdc(dir.path(), &["validate", "--set", "crystal.g=0.5"]);
    assert_eq!(warn.status.code(), Some(0));
    assert!(stderr(&warn).contains("perturbative ceiling"));

    let mismatch = wpdc(dir.path(), &["validate", "--set", "grid.center_e=11"]);
    assert_eq!(mismatch.status.code(), Some(3));
    assert!(stderr(&mismatch).contains("frequency matching"));

    let unknown = wpdc(dir.path(), &["validate", "--set", "grid.bogus=1"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("grid.bogus"));

    let missing = wpdc(dir.path(), &["validate", "--config", "nope.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn config_file_with_sections_or_dotted_keys() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), "grid.n_pairs = 4\ncrystal.g = 0.02\n").unwrap();
    std::fs::write(dir.path().join("b.toml"), "[grid]\nn_pairs = 4\n[crystal]\ng = 0.02\n").unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[detector]\nwindw = 3\n").unwrap();
    for f in ["a.toml", "b.toml"] {
        assert_eq!(wpdc(dir.path(), &["validate", "--config", f]).status.code(), Some(0));
    }
    let bad = wpdc(dir.path(), &["validate", "--config", "bad.toml"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("windw"));
}

#[test]
fn bell_writes_scan_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = wpdc(dir.path(), &with_small(&["bell", "--out", "run"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    let scan = std::fs::read_to_string(run.join("scan.csv")).unwrap();
    assert!(scan.starts_with("phi1,phi2,rate,stderr,fit,residual\n"));
    assert_eq!(scan.lines().count(), 37);
    let report = std::fs::read_to_string(run.join("bell_report.txt")).unwrap();
    for key in [
        "chsh.s = ",
        "ch_homogeneous.violated = ",
        "ch_genuine.3.violated = false",
    ] {
        assert!(report.contains(key), "{report}");
    }
    let manifest = std::fs::read_to_string(run.join("manifest.toml")).unwrap();
    assert!(manifest.contains("ensemble.realizations = 400"));
    assert!(manifest.contains("manifest.command = \"bell\""));
}

#[test]
fn manifest_reruns_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let first = wpdc(
        dir.path(),
        &with_small(&["scan", "--set", "scan.engine=clipped", "--out", "a", "--workers", "1"]),
    );
    assert!(first.status.success(), "{}", stderr(&first));
    let again = wpdc(
        dir.path(),
        &["scan", "--config", "a/manifest.toml", "--out", "b", "--workers", "1"],
    );
    assert!(again.status.success(), "{}", stderr(&again));
    let a = std::fs::read(dir.path().join("a/scan.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/scan.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn uncoupled_crystal_correlates_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = wpdc(
        dir.path(),
        &with_small(&["correlate", "--set", "crystal.g=0", "--out", "c"]),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("c/cross.csv")).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let r: Vec<f64> = rec.unwrap().iter().map(|s| s.parse().unwrap()).collect();
        let (re, im, se) = (r[1], r[2], r[3]);
        assert_eq!((r[4], r[5]), (0.0, 0.0));
        assert!((re * re + im * im).sqrt() < 4.0 * se, "{r:?}");
        rows += 1;
    }
    assert_eq!(rows, 16);
}

#[test]
fn detect_and_dump_grid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = wpdc(dir.path(), &with_small(&["detect", "--out", "d"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let singles = std::fs::read_to_string(dir.path().join("d/singles.csv")).unwrap();
    assert_eq!(singles.lines().count(), 5);
    let joint = std::fs::read_to_string(dir.path().join("d/joint.csv")).unwrap();
    assert!(joint.starts_with("delay,standard_rate,"));

    let g = wpdc(dir.path(), &["dump-grid", "--set", "grid.n_pairs=3", "--out", "g"]);
    assert!(g.status.success());
    let grid = std::fs::read_to_string(dir.path().join("g/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 13);
    assert!(grid.contains(",e',"));
}

#[test]
fn failed_runs_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = wpdc(dir.path(), &["bell", "--set", "bell.angles=[0.0, 1.0]", "--out", "x"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("x").exists());

    let o = wpdc(dir.path(), &["scan", "--workers", "0", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("y").exists());
}
