use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn vergm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vergm")).args(args).output().expect("spawn vergm")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn fit_config() -> String {
    data("example/fit.json").display().to_string()
}

#[test]
fn fit_mple_on_bundled_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = vergm(&["fit", "--config", &fit_config(), "--method", "mple", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let est = json(&out);
    assert_eq!(est["method"], "mple");
    assert_eq!(est["theta"].as_array().unwrap().len(), 3);
    assert_eq!(est["se"].as_array().unwrap().len(), 3);
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("estimate.json")).unwrap()).unwrap();
    assert_eq!(saved, est);
}

#[test]
fn unresolved_covariate_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = vergm(&[
        "fit",
        "--config",
        &fit_config(),
        "--terms",
        "sum,edgecov(dist)",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unresolved covariate"));
}

#[test]
fn usage_errors_exit_one() {
    let out = vergm(&["fit", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mcmle_seeded_by_mple_is_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = vergm(&[
        "fit",
        "--config",
        &fit_config(),
        "--method",
        "mcmle",
        "--seed-method",
        "mple",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&out.stderr));
    let est = json(&out);
    assert_eq!(est["method"], "mple-mcmle");
    assert_eq!(est["diagnostics"]["seed_estimate"]["method"], "mple");
    assert_eq!(out.status.code() == Some(0), est["converged"].as_bool().unwrap());
}

#[test]
fn manifest_reproduces_fit() {
    let a = tempfile::tempdir().unwrap();
    let out = vergm(&["fit", "--config", &fit_config(), "--method", "cd", "--out-dir", a.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 2024);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));

    // The resolved config is itself a valid config file.
    let b = tempfile::tempdir().unwrap();
    let cfg = b.path().join("resolved.json");
    std::fs::write(&cfg, serde_json::to_string(&manifest["config"]).unwrap()).unwrap();
    let again = vergm(&["fit", "--config", cfg.to_str().unwrap(), "--out-dir", b.path().to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0), "{}", String::from_utf8_lossy(&again.stderr));
    assert_eq!(json(&out)["theta"], json(&again)["theta"]);
}

#[test]
fn missing_seed_is_generated_and_printed() {
    let dir = tempfile::tempdir().unwrap();
    let edges = data("example/edges.csv");
    let out = vergm(&[
        "fit",
        "--edges",
        edges.to_str().unwrap(),
        "--terms",
        "sum",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let seed: u64 = stderr.lines().find_map(|l| l.strip_prefix("seed: ")).unwrap().parse().unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], seed);
}

#[test]
fn non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = vergm(&[
        "fit",
        "--config",
        &fit_config(),
        "--method",
        "mcmle",
        "--seed-method",
        "zeros",
        "--max-iterations",
        "1",
        "--samples",
        "50",
        "--interval",
        "2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["converged"], false);
    assert!(dir.path().join("estimate.json").exists());
}

#[test]
fn summarize_prints_summary() {
    let out = vergm(&["summarize", "--edges", data("example/edges.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&out);
    assert_eq!(s["nodes"], 5);
    assert_eq!(s["max"], 3);
}

#[test]
fn simulate_writes_traces_and_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = vergm(&[
        "simulate",
        "--nodes",
        "4",
        "--terms",
        "sum,mutual",
        "--theta",
        "-0.5,0.2",
        "--interval",
        "5",
        "--samples",
        "12",
        "--seed",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert_eq!(stats.lines().next(), Some("sum,mutual"));
    assert_eq!(stats.lines().count(), 13);
    assert_eq!(std::fs::read_dir(dir.path().join("samples")).unwrap().count(), 12);
    assert!(dir.path().join("manifest.json").exists());
}

fn run_study(dir: &Path) -> Output {
    vergm(&["study", "--config", data("study_desk.json").to_str().unwrap(), "--out-dir", dir.to_str().unwrap()])
}

#[test]
fn desk_study_writes_reports_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let out = run_study(a.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.csv", "raw.csv", "report.json", "manifest.json"] {
        assert!(a.path().join(f).exists(), "{f} missing");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().next().unwrap().starts_with("method"));

    let mut rdr = csv::Reader::from_path(a.path().join("report.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let required = ["method", "coefficient", "arb", "se", "rmse", "calibration", "coverage", "mean_seconds", "failures"];
    assert_eq!(header, required);
    assert_eq!(rdr.records().count(), 6);

    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_study(b.path()).status.code(), Some(0));
    let raw_a = std::fs::read(a.path().join("raw.csv")).unwrap();
    let raw_b = std::fs::read(b.path().join("raw.csv")).unwrap();
    assert_eq!(raw_a, raw_b);
}
