use std::fs;
use std::path::Path;

use enaam::config::{ExperimentSpec, FileConfig};
use enaam::experiment::{kendall_tau, run_file_name};
use enaam::records::read_slot_records;
use enaam::{cmd_forecast_train, cmd_gen_traces, cmd_simulate, cmd_sweep_alpha, GenTracesParams};
use enaam_core::simulator::{compare_savings, PolicyKind};

fn spec(out: &Path, extra: &str) -> ExperimentSpec {
    let text = format!(
        "[traces]\ndays = 3\n[experiment]\nforecaster = \"seasonal-naive\"\noutput_dir = {:?}\n{extra}",
        out.display().to_string()
    );
    ExperimentSpec::from_toml(&text).unwrap()
}

fn list(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_one_file_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        "policies = [\"enaam\", \"deta-r\", \"no-management\"]\nalpha = 0.0\n",
    );
    let summary = cmd_simulate(&s).unwrap();
    assert_eq!(summary.runs.len(), 3);
    let runs = list(&dir.path().join("runs"));
    for p in PolicyKind::ALL {
        assert!(runs.contains(&run_file_name(p, 0.0, 1)), "{runs:?}");
        assert!(dir.path().join(format!("savings_{p}.csv")).exists());
    }
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("summary.csv").exists());
    let hourly = fs::read_to_string(dir.path().join("savings_enaam.csv")).unwrap();
    assert_eq!(hourly.lines().count(), 1 + 24);
}

#[test]
fn empty_policy_list_is_rejected() {
    let text = "[experiment]\npolicies = []\n";
    let err = ExperimentSpec::from_toml(text).unwrap_err();
    assert!(err.to_string().contains("policies"));
}

#[test]
fn two_seeds_give_per_seed_files_and_means() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(
        dir.path(),
        "policy = \"enaam\"\nalpha = 0.5\nseeds = [4, 5]\n",
    );
    let summary = cmd_simulate(&s).unwrap();
    let runs = list(&dir.path().join("runs"));
    assert!(runs.contains(&run_file_name(PolicyKind::Enaam, 0.5, 4)));
    assert!(runs.contains(&run_file_name(PolicyKind::Enaam, 0.5, 5)));
    assert_eq!(summary.aggregate.len(), 1);
    let agg = &summary.aggregate[0];
    assert_eq!(agg.seeds, 2);
    let per_seed: Vec<f64> = summary
        .runs
        .iter()
        .map(|r| r.metrics.mean_savings.unwrap())
        .collect();
    assert!((agg.mean_savings - (per_seed[0] + per_seed[1]) / 2.0).abs() < 1e-12);
}

#[test]
fn summary_matches_slot_files() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "seeds = [2, 3]\n");
    let summary = cmd_simulate(&s).unwrap();
    for r in &summary.runs {
        let test = read_slot_records(dir.path().join(&r.file)).unwrap();
        let base = read_slot_records(dir.path().join(&r.baseline_file)).unwrap();
        let recomputed = compare_savings(&test, &base).unwrap().mean;
        assert!((recomputed - r.metrics.mean_savings.unwrap()).abs() <= 1e-9);
        let ledger = test.iter().map(|x| x.drained_kj).sum::<f64>();
        assert!((ledger - r.metrics.total_drained_kj).abs() <= 1e-9);
    }
}

#[test]
fn outputs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_simulate(&spec(a.path(), "")).unwrap();
    cmd_simulate(&spec(b.path(), "")).unwrap();
    for sub in [Path::new("."), Path::new("runs")] {
        let names = list(&a.path().join(sub));
        assert_eq!(names, list(&b.path().join(sub)));
        for n in names {
            let pa = a.path().join(sub).join(&n);
            if pa.is_file() {
                assert_eq!(
                    fs::read(&pa).unwrap(),
                    fs::read(b.path().join(sub).join(&n)).unwrap(),
                    "{n}"
                );
            }
        }
    }
}

#[test]
fn failed_simulate_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // a directory where the summary file should go makes the last write fail
    fs::create_dir_all(out.join("summary.json")).unwrap();
    let err = cmd_simulate(&spec(&out, ""));
    assert!(err.is_err());
    assert!(!out.join("runs").exists());
    assert!(!out.join("summary.csv").exists());
    assert!(!out.join("savings_enaam.csv").exists());
}

#[test]
fn invalid_trace_file_surfaces_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = format!(
        "[traces]\nsource = \"csv\"\nload_csv = \"/nonexistent/load.csv\"\nharvest_csv = \"/nonexistent/h.csv\"\n[experiment]\noutput_dir = {:?}\n",
        out.display().to_string()
    );
    let err = cmd_simulate(&ExperimentSpec::from_toml(&text).unwrap()).unwrap_err();
    assert!(err.to_string().contains("not found"), "{err}");
    assert!(!out.exists());
}

#[test]
fn sweep_table_shape_and_trend() {
    let dir = tempfile::tempdir().unwrap();
    let mut fc = FileConfig::from_toml("", &[]).unwrap();
    fc.experiment.forecaster = enaam::config::ForecasterKind::SeasonalNaive;
    fc.experiment.output_dir = dir.path().to_path_buf();
    let s = ExperimentSpec::from_file_config(fc).unwrap();
    let summary = cmd_sweep_alpha(&s, &[0.0, 0.5, 1.0, 0.5]).unwrap();
    assert_eq!(summary.rows.len(), 3);
    assert_eq!(summary.warnings.len(), 1);
    assert!(summary.rows[0].mean_savings >= summary.rows[1].mean_savings);
    assert_eq!(
        summary.kendall_tau,
        kendall_tau(
            &[0.0, 0.5, 1.0],
            &summary
                .rows
                .iter()
                .map(|r| r.mean_savings)
                .collect::<Vec<_>>()
        )
    );
    let csv = fs::read_to_string(dir.path().join("sweep_alpha.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(cmd_sweep_alpha(&s, &[0.5, 0.5]).is_err());
}

fn gen(
    days: usize,
    seed: u64,
    out: &Path,
) -> Result<(std::path::PathBuf, std::path::PathBuf), enaam::ExperimentError> {
    cmd_gen_traces(&GenTracesParams {
        days,
        seed,
        l_max_mb: 15.0,
        noise_sd_mb: 0.75,
        beta_max: 490.0,
        output_dir: out.to_path_buf(),
    })
}

#[test]
fn gen_traces_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (l1, h1) = gen(30, 1, &dir.path().join("a")).unwrap();
    let (l2, h2) = gen(30, 1, &dir.path().join("b")).unwrap();
    // header plus one row per hour
    assert_eq!(fs::read_to_string(&l1).unwrap().lines().count(), 721);
    assert_eq!(fs::read_to_string(&h1).unwrap().lines().count(), 721);
    assert_eq!(fs::read(&l1).unwrap(), fs::read(&l2).unwrap());
    assert_eq!(fs::read(&h1).unwrap(), fs::read(&h2).unwrap());
    assert!(gen(0, 1, &dir.path().join("c")).is_err());
    assert!(!dir.path().join("c").exists());
}

#[test]
fn generated_traces_drive_a_csv_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let (load, harvest) = gen(3, 2, &dir.path().join("traces")).unwrap();
    let out = dir.path().join("out");
    let text = format!(
        "[traces]\nsource = \"csv\"\nload_csv = {:?}\nharvest_csv = {:?}\nedge_share = 1.0\n[experiment]\nforecaster = \"seasonal-naive\"\noutput_dir = {:?}\n",
        load.display().to_string(),
        harvest.display().to_string(),
        out.display().to_string()
    );
    let summary = cmd_simulate(&ExperimentSpec::from_toml(&text).unwrap()).unwrap();
    assert_eq!(summary.runs[0].metrics.slots, 72);
}

#[test]
fn forecast_train_saves_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let (load, _) = gen(5, 3, dir.path()).unwrap();
    let model_path = dir.path().join("model.json");
    let report = cmd_forecast_train(&load, "value", 3, 0, &model_path).unwrap();
    assert_eq!(report.epochs_run, 3);
    let model = enaam::model_file::load_model(&model_path).unwrap();
    assert_eq!(model.hidden_units(), 4);
}
