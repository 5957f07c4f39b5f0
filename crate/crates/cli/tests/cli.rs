use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qnpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnpd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_toy(dir: &Path, solvers: &str, extra: &str) -> std::path::PathBuf {
    fs::write(dir.join("toy.conf"), "width = 12\nheight = 12\nseed = 1\n").unwrap();
    let manifest = dir.join("toy.manifest");
    fs::write(
        &manifest,
        format!(
            "problem = toy.conf\nsolvers = {solvers}\noutput_dir = out\n\
             reference.iters = 500\nmax_iters = 40\nwall_clock = false\n{extra}"
        ),
    )
    .unwrap();
    manifest
}

#[test]
fn selftest_passes_and_is_reproducible() {
    let a = qnpd(&["selftest"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stdout));
    let b = qnpd(&["selftest"]);
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 7);
    assert!(!text.contains("FAIL "));
}

#[test]
fn selftest_detects_a_corrupted_gradient() {
    let out = qnpd(&["selftest", "--corrupt-gradient"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let failed: Vec<_> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].contains("kl_gradient"));
}

#[test]
fn single_solver_run_writes_its_outputs() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_toy(tmp.path(), "pdal", "");
    let out = qnpd(&["run", manifest.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let csvs: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(csvs.len(), 1);
    assert!(dir.join("pdal.csv").exists());
    assert!(dir.join("pdal.pgm").exists());
    for name in ["truth.pgm", "observation.pgm", "reference.pgm"] {
        assert!(dir.join(name).exists(), "{name}");
    }
    let csv = fs::read_to_string(dir.join("pdal.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    let rows: Vec<_> = summary.lines().filter(|l| l.starts_with("pdal ")).collect();
    assert_eq!(rows.len(), 1);
    let gap: f64 = rows[0].split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(gap.is_finite() && gap >= 0.0, "{gap}");
}

#[test]
fn unknown_solver_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_toy(tmp.path(), "pdal, newton_cg", "");
    let out = qnpd(&["run", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("solvers"), "{err}");
    assert!(err.contains("newton_cg"), "{err}");
    assert!(!tmp.path().join("out").join("summary.txt").exists());
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_toy(tmp.path(), "pdal", "stepsize = 3\n");
    let out = qnpd(&["run", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("stepsize"));
}

#[test]
fn runs_without_wall_clock_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_toy(tmp.path(), "pdal, var_pdal", "memory = 3\n");
    let path = manifest.to_str().unwrap();
    assert!(qnpd(&["run", path]).status.success());
    let dir = tmp.path().join("out");
    let first: Vec<_> = ["pdal.csv", "var_pdal.csv"]
        .iter()
        .map(|f| fs::read(dir.join(f)).unwrap())
        .collect();
    fs::remove_dir_all(dir.join("cache")).unwrap();
    assert!(qnpd(&["run", path]).status.success());
    for (f, bytes) in ["pdal.csv", "var_pdal.csv"].iter().zip(&first) {
        assert_eq!(&fs::read(dir.join(f)).unwrap(), bytes, "{f}");
    }
}

#[test]
fn reference_cache_is_reused() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_toy(tmp.path(), "pdhg", "");
    let path = manifest.to_str().unwrap();
    assert!(qnpd(&["run", path]).status.success());
    let cache = tmp.path().join("out").join("cache");
    let entries: Vec<_> = fs::read_dir(&cache).unwrap().filter_map(|e| e.ok()).collect();
    assert_eq!(entries.len(), 1);
    let cached = entries[0].path();
    // a doctored cache proves the second run reads it instead of recomputing
    let text = fs::read_to_string(&cached).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let last = lines.len() - 1;
    lines[last] = lines[last].split_whitespace().map(|_| "50").collect::<Vec<_>>().join(" ");
    fs::write(&cached, lines.join("\n") + "\n").unwrap();
    let summary_before = fs::read_to_string(tmp.path().join("out").join("summary.txt")).unwrap();
    assert!(qnpd(&["run", path]).status.success());
    let summary_after = fs::read_to_string(tmp.path().join("out").join("summary.txt")).unwrap();
    assert_ne!(summary_before.lines().next(), summary_after.lines().next());
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 1);
    assert_eq!(fs::read_to_string(&cached).unwrap(), lines.join("\n") + "\n");
}

#[test]
fn plotdata_writes_both_columns() {
    let tmp = TempDir::new().unwrap();
    let manifest = write_toy(tmp.path(), "pdal", "");
    assert!(qnpd(&["run", manifest.to_str().unwrap()]).status.success());
    let trace = tmp.path().join("out").join("pdal.csv");
    let plots = tmp.path().join("plots");
    let out = qnpd(&["plotdata", trace.to_str().unwrap(), "--out-dir", plots.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let by_iter = fs::read_to_string(plots.join("pdal.iter_gap.txt")).unwrap();
    let by_time = fs::read_to_string(plots.join("pdal.time_gap.txt")).unwrap();
    assert_eq!(by_iter.lines().next(), Some("# iter gap"));
    assert_eq!(by_time.lines().next(), Some("# time gap"));
    assert_eq!(by_iter.lines().count(), 41);
    let second: Vec<f64> = by_iter.lines().nth(1).unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
    assert_eq!(second[0], 1.0);
}

#[test]
fn plotdata_rejects_a_malformed_trace() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "not,a,trace\n").unwrap();
    assert_eq!(qnpd(&["plotdata", bad.to_str().unwrap()]).status.code(), Some(1));
}
