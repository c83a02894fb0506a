//! Experiment orchestration: runs fan out over (seed, policy, alpha) and the
//! results land in plain CSV files plus one JSON summary.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use enaam_core::controller::{CostWeights, LookaheadParams};
use enaam_core::forecast::{train_lstm, ForecastError, LstmModel, TrainReport};
use enaam_core::simulator::{
    compare_savings, hourly_profile, run, ForecastSource, PolicyConfig, PolicyKind, RunMetrics,
    RunOutput, SimError,
};
use enaam_core::traces::{TimeSeriesTrace, TraceBundle, TraceError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentSpec, ForecasterKind, SpecError, TraceSource};
use crate::model_file::{save_model, ModelFileError};
use crate::records::write_slot_records;
use crate::trace_io::{load_csv_trace, write_csv, TraceFileError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    TraceFile(#[from] TraceFileError),
    #[error("traces: {0}")]
    Trace(#[from] TraceError),
    #[error("forecaster: {0}")]
    Forecast(#[from] ForecastError),
    #[error("simulation (seed {seed}): {source}")]
    Sim {
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("writing {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// Slots per day for the hour-of-day profiles.
const SLOTS_PER_DAY: usize = 24;

pub fn load_bundle(spec: &ExperimentSpec, seed: u64) -> Result<TraceBundle> {
    match &spec.traces {
        TraceSource::Synthetic {
            days,
            l_max_mb,
            noise_sd_mb,
            beta_max,
        } => Ok(TraceBundle::synthetic(
            *days,
            *l_max_mb,
            *noise_sd_mb,
            *beta_max,
            seed,
        )?),
        TraceSource::Csv {
            load,
            harvest,
            load_column,
            harvest_column,
            edge_share,
        } => {
            let slot = spec.site.slot_seconds;
            let load = load_csv_trace(load, load_column, slot)?.scaled(*edge_share)?;
            let harvest = load_csv_trace(harvest, harvest_column, slot)?;
            Ok(TraceBundle::new(load, harvest, *edge_share)?)
        }
    }
}

fn weights(spec: &ExperimentSpec, alpha: f64) -> Result<CostWeights> {
    let w = if spec.raw_cost_units {
        CostWeights::raw(alpha)
    } else {
        CostWeights::new(alpha)
    };
    w.map_err(|e| SpecError::invalid("experiment.alphas", e.to_string()).into())
}

fn policy_config(
    spec: &ExperimentSpec,
    kind: PolicyKind,
    alpha: f64,
    seed: u64,
) -> Result<PolicyConfig> {
    let mut lookahead = LookaheadParams::new(weights(spec, alpha)?);
    lookahead.horizon = spec.horizon;
    lookahead.grid_points = spec.grid_points;
    Ok(PolicyConfig {
        kind,
        lookahead,
        seed,
    })
}

/// One finished run and its savings against the no-management baseline.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: PolicyKind,
    pub alpha: f64,
    pub seed: u64,
    pub output: RunOutput,
    pub savings: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub baseline: RunOutput,
    pub runs: Vec<RunResult>,
}

/// Runs every (policy, alpha) for every seed. Forecasters are trained once per
/// seed on that seed's traces and shared by its runs.
pub fn execute(
    spec: &ExperimentSpec,
    policies: &[PolicyKind],
    alphas: &[f64],
) -> Result<Vec<SeedResult>> {
    spec.seeds
        .par_iter()
        .map(|&seed| {
            let bundle = load_bundle(spec, seed)?;
            let models: Option<(LstmModel, LstmModel)> = match spec.forecaster {
                ForecasterKind::Lstm => Some((
                    train_lstm(bundle.load().values(), spec.epochs, 0.67, seed)?.0,
                    train_lstm(bundle.harvested().values(), spec.epochs, 0.67, seed)?.0,
                )),
                ForecasterKind::SeasonalNaive => None,
            };
            let source = match &models {
                Some((load, harvest)) => ForecastSource::Lstm {
                    load,
                    harvest,
                    period: spec.period,
                },
                None => ForecastSource::SeasonalNaive {
                    period: spec.period,
                },
            };
            let simulate = |kind, alpha| -> Result<RunOutput> {
                let policy = policy_config(spec, kind, alpha, seed)?;
                run(&bundle, &policy, &spec.site, source, spec.initial_beta_kj)
                    .map_err(|source| ExperimentError::Sim { seed, source })
            };
            let baseline = simulate(PolicyKind::NoManagement, 0.0)?;
            let combos: Vec<(PolicyKind, f64)> = policies
                .iter()
                .flat_map(|&p| alphas.iter().map(move |&a| (p, a)))
                .collect();
            let runs = combos
                .par_iter()
                .map(|&(policy, alpha)| {
                    let mut output = simulate(policy, alpha)?;
                    let s = compare_savings(&output.records, &baseline.records)
                        .map_err(|source| ExperimentError::Sim { seed, source })?;
                    output.metrics.mean_savings = Some(s.mean);
                    Ok(RunResult {
                        policy,
                        alpha,
                        seed,
                        output,
                        savings: s.per_slot,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SeedResult {
                seed,
                baseline,
                runs,
            })
        })
        .collect()
}

/// Tracks files written by a command so a failure can remove them.
struct Outputs {
    created: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
}

impl Outputs {
    fn new() -> Self {
        Self {
            created: Vec::new(),
            created_dirs: Vec::new(),
        }
    }

    fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        missing.reverse();
        self.created_dirs.extend(missing);
        Ok(())
    }

    fn track(&mut self, path: PathBuf) -> PathBuf {
        self.created.push(path.clone());
        path
    }

    fn cleanup(self) {
        for f in self.created.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }

    /// Runs `write`, removing everything it created if it fails.
    fn guarded<T>(write: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let mut out = Self::new();
        match write(&mut out) {
            Ok(v) => Ok(v),
            Err(e) => {
                out.cleanup();
                Err(e)
            }
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn run_file_name(policy: PolicyKind, alpha: f64, seed: u64) -> String {
    format!("{policy}_alpha{alpha}_seed{seed}.csv")
}

pub fn baseline_file_name(seed: u64) -> String {
    format!("baseline_seed{seed}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub alpha: f64,
    pub seed: u64,
    /// Slot CSV, relative to the output directory.
    pub file: String,
    /// No-management slot CSV the savings are measured against.
    pub baseline_file: String,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub policy: String,
    pub alpha: f64,
    pub seeds: usize,
    pub mean_savings: f64,
    pub mean_utilization: f64,
    pub mean_outage_slots: f64,
    pub mean_forecast_rmse_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub runs: Vec<RunSummary>,
    /// Means over seeds per (policy, alpha).
    pub aggregate: Vec<AggregateRow>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn aggregate(results: &[SeedResult], policy: PolicyKind, alpha: f64) -> AggregateRow {
    let runs: Vec<&RunResult> = results
        .iter()
        .flat_map(|s| &s.runs)
        .filter(|r| r.policy == policy && r.alpha == alpha)
        .collect();
    AggregateRow {
        policy: policy.to_string(),
        alpha,
        seeds: runs.len(),
        mean_savings: mean(
            runs.iter()
                .map(|r| r.output.metrics.mean_savings.unwrap_or(0.0)),
        ),
        mean_utilization: mean(runs.iter().map(|r| r.output.metrics.mean_utilization)),
        mean_outage_slots: mean(runs.iter().map(|r| r.output.metrics.outage_slots as f64)),
        mean_forecast_rmse_load: mean(runs.iter().map(|r| r.output.metrics.forecast_rmse_load)),
    }
}

/// Writes slot CSVs for every run, hour-of-day savings per policy, and
/// `summary.json` / `summary.csv`.
pub fn cmd_simulate(spec: &ExperimentSpec) -> Result<SimulateSummary> {
    if spec.policies.is_empty() {
        return Err(SpecError::invalid("experiment.policies", "must not be empty").into());
    }
    let results = execute(spec, &spec.policies, &spec.alphas)?;
    let root = spec.output_dir.clone();
    Outputs::guarded(|out| {
        let runs_dir = root.join("runs");
        out.dir(&runs_dir)?;
        let mut summaries = Vec::new();
        for seed in &results {
            let base_name = baseline_file_name(seed.seed);
            let path = out.track(runs_dir.join(&base_name));
            write_slot_records(&path, &seed.baseline.records).map_err(csv_err(&path))?;
            for r in &seed.runs {
                let name = run_file_name(r.policy, r.alpha, r.seed);
                let path = out.track(runs_dir.join(&name));
                write_slot_records(&path, &r.output.records).map_err(csv_err(&path))?;
                summaries.push(RunSummary {
                    policy: r.policy.to_string(),
                    alpha: r.alpha,
                    seed: r.seed,
                    file: format!("runs/{name}"),
                    baseline_file: format!("runs/{base_name}"),
                    metrics: r.output.metrics.clone(),
                });
            }
        }

        for &policy in &spec.policies {
            let path = out.track(root.join(format!("savings_{policy}.csv")));
            let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
            w.write_record(["alpha", "hour", "mean_savings"])
                .map_err(csv_err(&path))?;
            for &alpha in &spec.alphas {
                let profiles: Vec<Vec<f64>> = results
                    .iter()
                    .flat_map(|s| &s.runs)
                    .filter(|r| r.policy == policy && r.alpha == alpha)
                    .map(|r| hourly_profile(&r.savings, SLOTS_PER_DAY))
                    .collect();
                for hour in 0..SLOTS_PER_DAY {
                    let m = mean(profiles.iter().map(|p| p[hour]));
                    w.write_record([alpha.to_string(), hour.to_string(), m.to_string()])
                        .map_err(csv_err(&path))?;
                }
            }
            w.flush().map_err(io_err(&path))?;
        }

        let aggregate: Vec<AggregateRow> = spec
            .policies
            .iter()
            .flat_map(|&p| spec.alphas.iter().map(move |&a| (p, a)))
            .map(|(p, a)| aggregate(&results, p, a))
            .collect();
        let path = out.track(root.join("summary.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        for row in &aggregate {
            w.serialize(row).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;

        let summary = SimulateSummary {
            runs: summaries,
            aggregate,
        };
        let path = out.track(root.join("summary.json"));
        write_json(&path, &summary)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub mean_savings: f64,
    pub mean_utilization: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Kendall rank correlation between alpha and mean savings; -1 for a
    /// strictly decreasing trend.
    pub kendall_tau: f64,
    /// Largest rise in savings between consecutive alphas (0 when non-increasing).
    pub max_increase: f64,
    pub warnings: Vec<String>,
}

/// Kendall's tau-a over paired samples.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mut score = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = (x[j] - x[i]).signum() * (y[j] - y[i]).signum();
            if (x[j] - x[i]) != 0.0 && (y[j] - y[i]) != 0.0 {
                score += s;
            }
        }
    }
    score / (n * (n - 1) / 2) as f64
}

/// Sorts and deduplicates `alphas`, returning a warning per dropped duplicate.
pub fn dedupe_alphas(alphas: &[f64]) -> (Vec<f64>, Vec<String>) {
    let mut sorted = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut warnings = Vec::new();
    let mut out: Vec<f64> = Vec::with_capacity(sorted.len());
    for a in sorted {
        if out.last() == Some(&a) {
            warnings.push(format!("duplicate alpha {a} ignored"));
        } else {
            out.push(a);
        }
    }
    (out, warnings)
}

/// ENAAM savings and utilization per alpha, written to `sweep_alpha.csv` and
/// `sweep_alpha.json`.
pub fn cmd_sweep_alpha(spec: &ExperimentSpec, alphas: &[f64]) -> Result<SweepSummary> {
    let (alphas, warnings) = dedupe_alphas(alphas);
    if alphas.len() < 2 {
        return Err(SpecError::invalid("alphas", "need at least two distinct values").into());
    }
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(SpecError::invalid("alphas", format!("{a} outside [0, 1]")).into());
    }
    let results = execute(spec, &[PolicyKind::Enaam], &alphas)?;
    let rows: Vec<SweepRow> = alphas
        .iter()
        .map(|&a| {
            let agg = aggregate(&results, PolicyKind::Enaam, a);
            SweepRow {
                alpha: a,
                mean_savings: agg.mean_savings,
                mean_utilization: agg.mean_utilization,
                seeds: agg.seeds,
            }
        })
        .collect();
    let savings: Vec<f64> = rows.iter().map(|r| r.mean_savings).collect();
    let summary = SweepSummary {
        kendall_tau: kendall_tau(&alphas, &savings),
        max_increase: savings.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
        rows,
        warnings,
    };
    let root = spec.output_dir.clone();
    Outputs::guarded(|out| {
        out.dir(&root)?;
        let path = out.track(root.join("sweep_alpha.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        for row in &summary.rows {
            w.serialize(row).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        let path = out.track(root.join("sweep_alpha.json"));
        write_json(&path, &summary)
    })?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenTracesParams {
    pub days: usize,
    pub seed: u64,
    pub l_max_mb: f64,
    pub noise_sd_mb: f64,
    pub beta_max: f64,
    pub output_dir: PathBuf,
}

/// Writes `load.csv` and `harvest.csv` (`timestamp,value`) and returns their paths.
pub fn cmd_gen_traces(params: &GenTracesParams) -> Result<(PathBuf, PathBuf)> {
    if params.days == 0 {
        return Err(SpecError::invalid("days", "must be >= 1").into());
    }
    let bundle = TraceBundle::synthetic(
        params.days,
        params.l_max_mb,
        params.noise_sd_mb,
        params.beta_max,
        params.seed,
    )?;
    let as_value =
        |t: &TimeSeriesTrace| TimeSeriesTrace::new("value", t.slot_seconds(), t.values().to_vec());
    let load = as_value(bundle.load())?;
    let harvest = as_value(bundle.harvested())?;
    let root = params.output_dir.clone();
    Outputs::guarded(|out| {
        out.dir(&root)?;
        let lp = out.track(root.join("load.csv"));
        write_csv(&lp, &load).map_err(io_err(&lp))?;
        let hp = out.track(root.join("harvest.csv"));
        write_csv(&hp, &harvest).map_err(io_err(&hp))?;
        Ok((lp, hp))
    })
}

/// Trains a forecaster on one CSV series and saves it to `out`.
pub fn cmd_forecast_train(
    series: &Path,
    column: &str,
    epochs: usize,
    seed: u64,
    out: &Path,
) -> Result<TrainReport> {
    let trace = load_csv_trace(series, column, 3600.0)?;
    let (model, report) = train_lstm(trace.values(), epochs, 0.67, seed)?;
    save_model(out, &model)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kendall_tau_extremes() {
        let x = [0.0, 0.5, 1.0];
        assert_eq!(kendall_tau(&x, &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(kendall_tau(&x, &[1.0, 2.0, 3.0]), 1.0);
        assert_eq!(kendall_tau(&x, &[1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn dedupe_warns_once_per_duplicate() {
        let (a, w) = dedupe_alphas(&[0.5, 0.0, 0.5, 1.0, 0.5]);
        assert_eq!(a, vec![0.0, 0.5, 1.0]);
        assert_eq!(w.len(), 2);
    }
}
