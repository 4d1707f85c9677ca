use std::path::Path;
use std::process::{Command, Output};

fn fraccolloc(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraccolloc"))
        .args(args)
        .arg("--out-dir")
        .arg(out_dir)
        .env("FRACCOLLOC_THREADS", "2")
        .output()
        .expect("binary runs")
}

#[test]
fn identical_invocations_give_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let adapt = ["adapt", "--problem", "ex1", "--alpha", "0.4", "--m", "4", "--points", "gauss-legendre", "--tol", "1e-4", "--barrier", "r0"];
    let spectrum = ["spectrum", "--m", "5", "--points", "gauss-lobatto", "--alpha-grid", "199"];
    for args in [&adapt[..], &spectrum[..]] {
        assert!(fraccolloc(args, a.path()).status.success());
        assert!(fraccolloc(args, b.path()).status.success());
    }
    for name in ["adapt_trace.csv", "spectrum.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
    let spectrum_csv = std::fs::read_to_string(a.path().join("spectrum.csv")).unwrap();
    assert_eq!(spectrum_csv.lines().next().unwrap(), "alpha,index,re,im,neg_axis_distance");
    // Gauss-Lobatto has θ0 = 0, so the reduced matrix is m × m and carries no coefficients
    assert_eq!(spectrum_csv.lines().count(), 1 + 199 * 5);

    let record: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("adapt.json")).unwrap()).unwrap();
    assert!(record["error_linf_linf"].as_f64().unwrap() <= 1e-4);
    assert_eq!(record["intervals"].as_u64().unwrap() as usize, record["log"].as_array().unwrap().len());
}

#[test]
fn bad_flags_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["adapt", "--no-such-flag"][..],
        &["frobnicate"][..],
        &["adapt", "--alpha", "abc"][..],
        &["adapt", "--points", "chebyshev"][..],
        &["adapt", "--alpha", "1.5"][..],
        &["spectrum", "--barrier", "r0"][..],
    ] {
        let out = fraccolloc(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn numerical_failure_exits_with_one() {
    // a single allowed rejection cannot reach the barrier at this tolerance
    let dir = tempfile::tempdir().unwrap();
    let out = fraccolloc(&["adapt", "--m", "0", "--tol", "1e-6", "--max-rejections", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rejected"));
}

#[test]
fn config_file_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"m": 3, "points": "gauss_legendre", "alpha_grid": 7}"#).unwrap();
    let cfg = config.to_str().unwrap();

    let out = fraccolloc(&["spectrum", "--config", cfg], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 4);

    let out = fraccolloc(&["spectrum", "--config", cfg, "--alpha-grid", "3"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 4);

    std::fs::write(&config, r#"{"m": "three"}"#).unwrap();
    assert_eq!(fraccolloc(&["spectrum", "--config", cfg], dir.path()).status.code(), Some(2));
}

#[test]
fn selftest_and_solve() {
    let dir = tempfile::tempdir().unwrap();
    let out = fraccolloc(&["selftest"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    let out = fraccolloc(&["solve", "--problem", "poly", "--m", "2", "--intervals", "5"], dir.path());
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("solve.json")).unwrap()).unwrap();
    assert!(summary["error_linf_linf"].as_f64().unwrap() <= 1e-9);
    assert_eq!(summary["intervals"], 5);
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fraccolloc"))
        .args(["selftest", "--out-dir"])
        .arg(dir.path())
        .env("FRACCOLLOC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
