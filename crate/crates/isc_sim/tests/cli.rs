use std::process::{Command, Output};

fn isc_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isc-sim"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .unwrap()
}

#[test]
fn compare_passes_on_steady_drive() {
    let out = isc_sim(&["compare", "configs/steady_1400.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("within tolerance"));
}

#[test]
fn compare_reports_euler_divergence_on_fiu_sweep() {
    let out = isc_sim(&["compare", "configs/fiu_sweep_3_25.toml"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("euler diverged"), "{stdout}");
    assert!(!stdout.contains("unexpected divergence"));
    // The highest-resistance stage leaves i_dh just above 1e-2.
    assert_eq!(out.status.code(), Some(1), "{stdout}");
}

#[test]
fn missing_config_is_an_error() {
    let out = isc_sim(&["compare", "configs/does_not_exist.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn coeffs_prints_named_values() {
    let out = isc_sim(&["coeffs", "configs/fiu_sweep_3_25.toml", "--omega", "-1900", "--theta", "0.2"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let values: Vec<f64> = stdout.lines().map(|l| l.split(" = ").nth(1).unwrap().parse().unwrap()).collect();
    assert!(values.len() > 10);
    assert!(values.iter().all(|v| v.is_finite()));
}

#[test]
fn validate_prints_a_verdict_per_check() {
    let out = isc_sim(&["validate"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert!(lines.iter().all(|l| l.starts_with("PASS") || l.starts_with("FAIL")));
    assert!(lines.iter().any(|l| l.contains("spectral")));
    // The damped-integral bounds fail on the full grid.
    let failed = lines.iter().any(|l| l.starts_with("FAIL"));
    assert_eq!(out.status.code(), Some(if failed { 1 } else { 0 }));
}

#[test]
fn simulate_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = isc_sim(&[
        "simulate",
        "configs/load_step.toml",
        "--substeps",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);
    assert!(dir.path().join("summary.csv").exists());
}
