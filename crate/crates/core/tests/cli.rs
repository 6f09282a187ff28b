use std::path::Path;
use std::process::Command;

use leegp::io::{parse_excursion_csv, RunManifest};
use leegp::stats::CovMatrix;
use leegp::toys::{TfSource, TrialsFactorCurve};

fn leegp(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_leegp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let o = leegp(dir, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn asimov_stage_records_grid_shape() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["asimov-cov", "--model", "hgg_1d", "--out", "cov.csv"]);
    let (cov, side) = CovMatrix::load(&d.path().join("cov.csv")).unwrap();
    assert_eq!(cov.n(), 61);
    assert_eq!(side.provenance, leegp::Provenance::Asimov);
    let m = RunManifest::load(&d.path().join("cov.manifest.json")).unwrap();
    assert_eq!(m.sample_counts["matrix_rows"], 61);
    assert_eq!(m.sample_counts["asimov_sets"], 61);
    assert!(m.outputs.contains_key("cov.csv") && m.outputs.contains_key("cov.json"));
    assert_eq!(m.config_hash.as_deref().map(str::len), Some(64));
}

#[test]
fn gp_stage_is_reproducible_across_worker_counts() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["asimov-cov", "--model", "hgg_1d", "--out", "cov.csv"]);
    ok(d.path(), &["sample-tf", "--cov", "cov.csv", "--n", "2e4", "--seed", "7", "--out", "a.csv", "--counts-out", "ua.csv"]);
    ok(d.path(), &["--workers", "1", "sample-tf", "--cov", "cov.csv", "--n", "20000", "--seed", "7", "--out", "b.csv", "--counts-out", "ub.csv"]);
    let read = |f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("ua.csv"), read("ub.csv"));

    let tf = TrialsFactorCurve::from_csv_str(&String::from_utf8(read("a.csv")).unwrap(), 20_000, TfSource::Gp).unwrap();
    assert_eq!(tf.levels.len(), leegp::toys::default_levels().len());
    assert!(tf.p_global.windows(2).all(|w| w[1] <= w[0]));
    assert!(tf.tf_err.iter().all(|e| e.is_finite() && *e >= 0.0));

    ok(d.path(), &["gv-bound", "--counts", "ua.csv", "--u0", "0.7071", "--out", "gv.csv"]);
    let gv = leegp::io::parse_bound_csv(&std::fs::read_to_string(d.path().join("gv.csv")).unwrap()).unwrap();
    let counts = parse_excursion_csv(&String::from_utf8(read("ua.csv")).unwrap()).unwrap();
    assert!((gv[0].expected - counts[0].mean_count).abs() < 1e-12);
    assert!(gv.windows(2).all(|w| w[1].tf_bound > w[0].tf_bound));
}

#[test]
fn brute_force_stage_writes_counts_and_covariance() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["brute-force", "--model", "hgg_1d", "--n", "300", "--seed", "3", "--out", "tf.csv", "--counts-out", "c.csv", "--cov-out", "bf.csv"]);
    ok(d.path(), &["brute-force", "--model", "hgg_1d", "--n", "300", "--seed", "3", "--out", "tf2.csv", "--workers", "1"]);
    assert_eq!(std::fs::read(d.path().join("tf.csv")).unwrap(), std::fs::read(d.path().join("tf2.csv")).unwrap());
    let (cov, side) = CovMatrix::load(&d.path().join("bf.csv")).unwrap();
    assert_eq!(side.provenance, leegp::Provenance::BruteForce);
    assert_eq!(side.seed, Some(3));
    assert!((0..cov.n()).all(|i| (cov.get(i, i) - 1.0).abs() < 1e-12));
    let counts = parse_excursion_csv(&std::fs::read_to_string(d.path().join("c.csv")).unwrap()).unwrap();
    assert_eq!(counts.len(), 6);
    assert!(counts.iter().all(|c| c.n_samples == 300));

    ok(d.path(), &["asimov-cov", "--model", "hgg_1d", "--out", "as.csv"]);
    ok(d.path(), &["covdiff", "--a", "as.csv", "--b", "bf.csv", "--out", "diff.json"]);
    let diff: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("diff.json")).unwrap()).unwrap();
    assert!(diff["q99"].as_f64().unwrap() < 0.2);
}

#[test]
fn config_document_drives_the_model() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(
        d.path().join("run.json"),
        r#"{"model": {"kind": "hgg_1d", "search_grid": {"mass": {"start": 110, "stop": 150, "step": 2}}},
            "run": {"seed": 11, "n": 100}}"#,
    )
    .unwrap();
    ok(d.path(), &["asimov-cov", "--config", "run.json", "--out", "cov.csv"]);
    let (cov, _) = CovMatrix::load(&d.path().join("cov.csv")).unwrap();
    assert_eq!(cov.n(), 21);
    ok(d.path(), &["brute-force", "--config", "run.json", "--out", "tf.csv"]);
    let m = RunManifest::load(&d.path().join("tf.manifest.json")).unwrap();
    assert_eq!(m.master_seed, Some(11));
    assert_eq!(m.sample_counts["toys"], 100);
    assert!(m.inputs.contains_key("run.json"));
}

#[test]
fn studies_emit_tables() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["bin-scan", "--n", "200", "--seed", "1", "--out", "bins.csv"]);
    let rows = leegp::io::parse_bin_scan_csv(&std::fs::read_to_string(d.path().join("bins.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1].mean <= w[0].mean));
    ok(d.path(), &["peak-widths", "--n", "200", "--seed", "1", "--out", "pw.csv"]);
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("pw.fit.json")).unwrap()).unwrap();
    assert!(fit["slope"].as_f64().unwrap().is_finite());
    ok(d.path(), &["asimov-cov", "--model", "hgg_1d", "--out", "cov.csv"]);
    ok(d.path(), &["upcross-analytic", "--cov", "cov.csv", "--levels", "0.5,1,2", "--out", "u.csv"]);
    let text = std::fs::read_to_string(d.path().join("u.csv")).unwrap();
    assert!(text.starts_with("u,expected_upcrossings,quadrature_error_estimate"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn exit_codes_separate_usage_from_numerics() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(leegp(d.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(leegp(d.path(), &["asimov-cov", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(leegp(d.path(), &["sample-tf", "--cov", "c.csv", "--n", "1.5", "--out", "x.csv"]).status.code(), Some(1));
    std::fs::write(d.path().join("bad.json"), r#"{"model": {"kind": "hgg_1d"}, "run": {"sede": 1}}"#).unwrap();
    let o = leegp(d.path(), &["brute-force", "--config", "bad.json", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sede"));
    assert_eq!(leegp(d.path(), &["--help"]).status.code(), Some(0));

    // a counts table whose anchors give a non-positive extrapolation
    std::fs::write(
        d.path().join("ec.csv"),
        "u,mean_count,std_error,n_samples,kind\n0.7,-1,0.1,10,euler_2d\n1,-2,0.1,10,euler_2d\n",
    )
    .unwrap();
    let o = leegp(d.path(), &["gv-bound", "--counts", "ec.csv", "--u0", "0.7", "--u1", "1", "--out", "g.csv"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
