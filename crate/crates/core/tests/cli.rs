use std::path::Path;
use std::process::Command;

const SEEDS: &str =
    r#""seeds": {"source_seed": 7, "permutation_seeds": [1], "simulation_seed": 11}"#;

fn run(args: &[&str], config: &str, dir: &Path) -> (i32, String) {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rptrellis"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn missing_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(
        &["encode"],
        r#"{"source": {"family": "Gaussian"}, "rate": 1}"#,
        dir.path(),
    );
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("lengths"));
}

#[test]
fn unknown_family_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{"source": {{"family": "Cauchy"}}, "rate": 1, "lengths": [4], "n": 100, {SEEDS}}}"#
    );
    assert_eq!(run(&["rd"], &config, dir.path()).0, 2);
}

#[test]
fn every_row_over_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{"source": {{"family": "Gaussian"}}, "rate": 1, "lengths": [10], "n": 1000,
            "memory_budget": 1000, "allow_spill": false, {SEEDS}}}"#
    );
    let (code, err) = run(&["encode"], &config, dir.path());
    assert_eq!(code, 3, "{err}");
    let results = std::fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert!(results.contains("skipped"));
}

#[test]
fn unreachable_rate_tolerance_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{"source": {{"family": "Uniform01"}}, "rate": 1, "lengths": [6], "n": 1000, {SEEDS},
            "search": {{"grid": {{"points": 200, "half_width_sd": 8.0}}, "prune_threshold": 1e-6,
              "rate_tol": 0.0, "seed_iterations": 50, "seed_coarsening": 5,
              "refine": {{"max_iter": 20, "tol": 1e-10, "merge_distance": 1e-3, "drop_mass": 1e-9,
                "certificate_tol": 1e-5, "max_insertions": 2, "insertions_per_round": 4}}}}}}"#
    );
    let (code, err) = run(&["rd"], &config, dir.path());
    assert_eq!(code, 4, "{err}");
}

#[test]
fn encode_writes_its_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{"source": {{"family": "Gaussian"}}, "rate": 1, "lengths": [6], "n": 2000, {SEEDS}}}"#
    );
    let (code, err) = run(&["encode", "--threads", "1"], &config, dir.path());
    assert_eq!(code, 0, "{err}");
    for name in ["results.csv", "report.json"] {
        assert!(dir.path().join("out").join(name).is_file(), "{name}");
    }
}
