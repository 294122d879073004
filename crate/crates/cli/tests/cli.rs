use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn depin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depin")).args(args).output().expect("run depin")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    let out = dir.to_str().unwrap();
    all.extend(["--out", out]);
    depin(&all)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn assert_same_across_workers(args: &[&str]) {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut one = args.to_vec();
    one.extend(["--workers", "1"]);
    let mut four = args.to_vec();
    four.extend(["--workers", "4"]);
    assert!(run_in(a.path(), &one).status.success(), "{args:?}");
    assert!(run_in(b.path(), &four).status.success(), "{args:?}");
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(!fa.is_empty());
    assert_eq!(fa, fb, "{args:?}");
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    assert_same_across_workers(&["threshold", "--L", "16,32", "--n", "40", "--oracle-check"]);
    assert_same_across_workers(&["t2t", "--L", "64,128", "--n", "60", "--correspondence-check"]);
    assert_same_across_workers(&["flat", "--L", "32,128", "--n", "30", "--u-grid", "0,4,16"]);
}

#[test]
fn threshold_writes_recomputed_force_and_oracle_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["threshold", "--L", "8", "--n", "30", "--lambda", "100", "--oracle-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("threshold_summary.csv")).unwrap();
    assert!(csv.starts_with("# program=depin"));
    assert!(csv.contains("# seed=1\n"));
    assert!(!csv.contains("workers"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 30);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let (f, g): (f64, f64) = (cols[6].parse().unwrap(), cols[7].parse().unwrap());
        assert!((f - g).abs() < 1e-9, "{row}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("threshold_report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    let oracle = &report["results"]["lengths"][0]["oracle"];
    assert_eq!(oracle["brute_force_checked"], 30);
    assert_eq!(oracle["brute_force_mismatches"].as_array().unwrap().len(), 0);
    assert!(oracle["toy_full_agreement"].as_u64().unwrap() >= 28);
}

#[test]
fn full_model_threshold_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["threshold", "--model", "full", "--L", "24", "--n", "10", "--truncated-kernel"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sites = fs::read_to_string(dir.path().join("threshold_sites.csv")).unwrap();
    assert!(sites.contains("ytilde_plus"));
}

#[test]
fn curves_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), &["curves", "--u-grid", "0,1,1000"]).status.success());
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("curves_summary.json")).unwrap()).unwrap();
    let r = &s["results"];
    assert!((r["phi_0"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-15);
    // u²Φ(u) = 1 - 4/u + 6/u² up to exponentially small terms.
    assert!((r["u_max_squared_phi"].as_f64().unwrap() - 0.996006).abs() < 1e-12);
    for row in r["p_u_normalization"].as_array().unwrap() {
        assert!((row["mass"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{row}");
    }
    let bessel = fs::read_to_string(dir.path().join("bessel.csv")).unwrap();
    let k0_at_1: f64 = bessel.lines().find(|l| l.starts_with("1.0000000000000000e0,")).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((k0_at_1 - 0.42102443824070834).abs() < 1e-12);
}

#[test]
fn test_suite_passes_and_catches_mutant() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_in(dir.path(), &["test", "--L", "1024", "--n", "2000"]);
    let text = String::from_utf8_lossy(&ok.stdout).to_string();
    assert_eq!(ok.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("test_report.json")).unwrap()).unwrap();
    for r in report["results"]["reports"].as_array().unwrap() {
        for c in r["checks"].as_array().unwrap() {
            assert!(c["statistic"].is_number() && c.get("lo").is_some() && c.get("hi").is_some(), "{c}");
        }
    }

    let bad = run_in(dir.path(), &["test", "--L", "64", "--n", "200", "--mutant"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL sum_conservation"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["t2t", "--u-grid", "5,1"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["threshold", "--L", "2"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["threshold", "--engine", "nope"]).status.code(), Some(2));
    assert_eq!(depin(&["bogus"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run_in(dir.path(), &["curves", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_feeds_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nL = 32\nn = 5\nseed = 77\nu-grid = 0, 2\n").unwrap();
    let out = run_in(dir.path(), &["t2t", "--config", cfg.to_str().unwrap(), "--n", "7"]);
    assert!(out.status.success());
    let table = fs::read_to_string(dir.path().join("t2t_sigma.csv")).unwrap();
    assert!(table.contains("# seed=77\n") && table.contains("# n=7\n") && table.contains("# u-grid=0,2\n"));
}
