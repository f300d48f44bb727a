use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loctime")).arg("--out-dir").arg(out).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_minimal_writes_one_row_per_replica_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.toml");
    let out = run(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(tmp.path().join("checkpoints.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(&header[0], "replica");
    assert_eq!(header.len(), 8);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let n: f64 = row[1].parse().unwrap();
        let l1: f64 = row[6].parse().unwrap();
        assert_eq!(l1 * n, n + 1.0);
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 16);
    assert_eq!(manifest["files"][0], "checkpoints.csv");
}

#[test]
fn negative_alpha_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "schema_version = 1\nn_max = 10\nalphas = [-1]\n[walk]\npreset = \"simple\"\ndim = 3\n");
    let out = run(&tmp.path().join("out"), &["simulate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alphas[0]"));
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "schema_version = 1\nn_max = 10\nreplica = 3\n[walk]\npreset = \"simple\"\ndim = 3\n");
    assert_eq!(run(&tmp.path().join("a"), &["simulate", &cfg]).status.code(), Some(2));
    let missing = tmp.path().join("nope.toml");
    assert_eq!(run(&tmp.path().join("b"), &["simulate", missing.to_str().unwrap()]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "schema_version = 2\nn_max = 10\n[walk]\npreset = \"simple\"\ndim = 3\n");
    assert_eq!(run(&tmp.path().join("c"), &["simulate", &cfg]).status.code(), Some(2));
}

#[test]
fn memory_cap_is_a_resource_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
schema_version = 1
n_max = 100

[walk]
preset = "custom"
dim = 2
atoms = [
  { step = [1, 0], prob = "1/2" },
  { step = [0, 1], prob = "1/4" },
  { step = [-1, -1], prob = "1/4" },
]
"#,
    );
    let out = run(tmp.path(), &["--mem-cap", "1000", "exact", &cfg]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exact_reports_limits_and_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.toml");
    let out = run(tmp.path(), &["exact", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(tmp.path().join("limits.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let limit = |label: &str| -> f64 { rows.iter().find(|r| &r[0] == label).unwrap()[1].parse().unwrap() };
    assert!((limit("power(0)") - 1.0 / 3.0).abs() < 1e-12);
    assert!((limit("power(2)") - 5.0).abs() < 1e-12);
    assert!((limit("indicator({1})") - 1.0 / 9.0).abs() < 1e-12);
    assert_eq!(limit("power(1)"), 1.0);
    assert!(rows.iter().all(|r| &r[3] == "1e-12"));

    let eq = std::fs::read_to_string(tmp.path().join("eq_table.csv")).unwrap();
    assert!(eq.lines().any(|l| l.starts_with("2,1,2.111111111111111")));
}

#[test]
fn recurrent_walk_fails_the_log_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("simple2_conditions.toml");
    let out = run(tmp.path(), &["verify", cfg.to_str().unwrap(), "--suite", "conditions"]);
    assert_eq!(out.status.code(), Some(1));
    let certs = std::fs::read_to_string(tmp.path().join("certificates.csv")).unwrap();
    assert!(certs.lines().skip(1).all(|l| l.contains("fails")));
}

#[test]
fn subsequence_suite_holds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("subsequence.toml");
    let out = run(tmp.path(), &["verify", cfg.to_str().unwrap(), "--suite", "subsequence"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("subsequence.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 50);
}

#[test]
fn recurrent_walk_is_refused_by_simulation_suites() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "schema_version = 1\nn_max = 64\nreplicas = 4\n[walk]\npreset = \"simple\"\ndim = 1\n");
    let out = run(&tmp.path().join("out"), &["verify", &cfg, "--suite", "slln"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("recurrent"));
}
