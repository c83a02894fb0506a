use std::process::Command;

fn enaam() -> Command {
    Command::new(env!("CARGO_BIN_EXE_enaam"))
}

#[test]
fn gen_traces_then_forecast_train() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces");
    let status = enaam()
        .args(["gen-traces", "--days", "4", "--seed", "3", "--out"])
        .arg(&traces)
        .status()
        .unwrap();
    assert!(status.success());
    let out = enaam()
        .args(["forecast-train", "--epochs", "2", "--seed", "1", "--series"])
        .arg(traces.join("load.csv"))
        .arg("--out")
        .arg(dir.path().join("m.json"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("test_rmse"));
}

#[test]
fn simulate_with_overrides_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = enaam()
        .args([
            "simulate",
            "--seed",
            "7",
            "--set",
            "traces.days=2",
            "--set",
            "experiment.forecaster=seasonal-naive",
            "--set",
            "experiment.policy=enaam",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("runs/enaam_alpha0_seed7.csv").exists());
    assert!(dir.path().join("runs/enaam_alpha0.5_seed7.csv").exists());
}

#[test]
fn invalid_config_names_the_field() {
    let out = enaam()
        .args(["simulate", "--set", "site.beta_low=1000"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("site.beta_low"));
}

#[test]
fn gen_traces_rejects_zero_days() {
    let dir = tempfile::tempdir().unwrap();
    let out = enaam()
        .args(["gen-traces", "--days", "0", "--out"])
        .arg(dir.path().join("t"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}
