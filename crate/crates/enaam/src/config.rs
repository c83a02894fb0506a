//! Experiment configuration.
//!
//! ```toml
//! [site]                 # any SiteConfig field; omitted fields keep their defaults
//! epsilon = 0.3
//!
//! [traces]
//! source = "synthetic"   # or "csv" with load_csv / harvest_csv
//! days = 30
//! l_max_mb = 15.0
//!
//! [controller]
//! horizon_t = 2
//! gamma_grid_points = 11
//!
//! [experiment]
//! policies = ["enaam", "deta-r", "no-management"]
//! alphas = [0.0, 0.5]
//! seeds = [1]
//! output_dir = "results"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use enaam_core::power::SiteConfig;
use enaam_core::simulator::PolicyKind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
}

impl SpecError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub source: TraceKind,
    pub days: usize,
    /// Peak load for the generator; defaults to `site.l_max`.
    pub l_max_mb: Option<f64>,
    pub noise_sd_mb: f64,
    /// Share of the traffic processed at the edge. Applied to CSV load traces;
    /// the generator already emits edge load.
    pub edge_share: f64,
    /// Defaults to `site.slot_seconds`.
    pub slot_seconds: Option<f64>,
    pub load_csv: Option<PathBuf>,
    pub harvest_csv: Option<PathBuf>,
    pub load_column: String,
    pub harvest_column: String,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            source: TraceKind::Synthetic,
            days: 30,
            l_max_mb: None,
            noise_sd_mb: 0.75,
            edge_share: 0.8,
            slot_seconds: None,
            load_csv: None,
            harvest_csv: None,
            load_column: "value".into(),
            harvest_column: "value".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub horizon_t: usize,
    pub gamma_grid_points: usize,
    /// Price energy in kJ instead of as a fraction of the peak draw.
    pub raw_cost_units: bool,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            horizon_t: 2,
            gamma_grid_points: 11,
            raw_cost_units: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecasterKind {
    #[default]
    Lstm,
    SeasonalNaive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub policies: Option<Vec<String>>,
    /// Single-policy shorthand for `policies`.
    pub policy: Option<String>,
    pub alphas: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Defaults to half the buffer capacity.
    pub initial_beta_kj: Option<f64>,
    pub forecaster: ForecasterKind,
    pub epochs: usize,
    pub period: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            policies: None,
            policy: None,
            alphas: None,
            alpha: None,
            seeds: None,
            seed: None,
            output_dir: "results".into(),
            initial_beta_kj: None,
            forecaster: ForecasterKind::Lstm,
            epochs: 100,
            period: 24,
        }
    }
}

/// The config file as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub site: SiteConfig,
    pub traces: TraceSection,
    pub controller: ControllerSection,
    pub experiment: ExperimentSection,
}

impl FileConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, SpecError> {
        let mut table: toml::Table = text.parse()?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Ok(table.try_into()?)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, SpecError> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|source| SpecError::Io {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }
}

/// Applies `section.key=value`, parsing `value` as a TOML value (bare words
/// are taken as strings).
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), SpecError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| SpecError::invalid(item, "override must look like section.key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| SpecError::invalid(key, "empty key"))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| SpecError::invalid(key, "path crosses a non-table value"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Where the traces of one run come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Synthetic {
        days: usize,
        l_max_mb: f64,
        noise_sd_mb: f64,
        beta_max: f64,
    },
    Csv {
        load: PathBuf,
        harvest: PathBuf,
        load_column: String,
        harvest_column: String,
        edge_share: f64,
    },
}

/// A validated experiment: every (policy, alpha, seed) combination is one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub site: SiteConfig,
    pub traces: TraceSource,
    pub policies: Vec<PolicyKind>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub horizon: usize,
    pub grid_points: usize,
    pub raw_cost_units: bool,
    pub initial_beta_kj: f64,
    pub forecaster: ForecasterKind,
    pub epochs: usize,
    pub period: usize,
}

fn pick<T>(
    list: Option<Vec<T>>,
    one: Option<T>,
    field: &str,
    default: Vec<T>,
) -> Result<Vec<T>, SpecError> {
    match (list, one) {
        (Some(_), Some(_)) => Err(SpecError::invalid(
            field,
            format!("give either `{field}` or its singular form, not both"),
        )),
        (Some(v), None) => Ok(v),
        (None, Some(x)) => Ok(vec![x]),
        (None, None) => Ok(default),
    }
}

impl ExperimentSpec {
    pub fn from_file_config(fc: FileConfig) -> Result<Self, SpecError> {
        let mut site = fc.site;
        if let Some(s) = fc.traces.slot_seconds {
            site.slot_seconds = s;
        }
        site.validate()
            .map_err(|e| SpecError::invalid(format!("site.{}", e.field), e.reason))?;

        let traces = match fc.traces.source {
            TraceKind::Synthetic => {
                let l_max_mb = fc.traces.l_max_mb.unwrap_or(site.l_max);
                if fc.traces.days == 0 {
                    return Err(SpecError::invalid("traces.days", "must be >= 1"));
                }
                if !(l_max_mb > 0.0 && l_max_mb.is_finite()) {
                    return Err(SpecError::invalid("traces.l_max_mb", "must be positive"));
                }
                if !(fc.traces.noise_sd_mb >= 0.0 && fc.traces.noise_sd_mb.is_finite()) {
                    return Err(SpecError::invalid(
                        "traces.noise_sd_mb",
                        "must be non-negative",
                    ));
                }
                if site.slot_seconds != 3600.0 {
                    return Err(SpecError::invalid(
                        "traces.slot_seconds",
                        "synthetic traces are hourly; use 3600",
                    ));
                }
                TraceSource::Synthetic {
                    days: fc.traces.days,
                    l_max_mb,
                    noise_sd_mb: fc.traces.noise_sd_mb,
                    beta_max: site.beta_max,
                }
            }
            TraceKind::Csv => TraceSource::Csv {
                load: fc.traces.load_csv.ok_or_else(|| {
                    SpecError::invalid("traces.load_csv", "required for csv traces")
                })?,
                harvest: fc.traces.harvest_csv.ok_or_else(|| {
                    SpecError::invalid("traces.harvest_csv", "required for csv traces")
                })?,
                load_column: fc.traces.load_column,
                harvest_column: fc.traces.harvest_column,
                edge_share: fc.traces.edge_share,
            },
        };
        if !(0.0..=1.0).contains(&fc.traces.edge_share) {
            return Err(SpecError::invalid(
                "traces.edge_share",
                "must lie in [0, 1]",
            ));
        }

        let ex = fc.experiment;
        let names = pick(
            ex.policies,
            ex.policy,
            "policies",
            PolicyKind::ALL
                .iter()
                .map(|k| k.as_str().to_string())
                .collect(),
        )?;
        if names.is_empty() {
            return Err(SpecError::invalid(
                "experiment.policies",
                "must not be empty",
            ));
        }
        let mut policies = Vec::with_capacity(names.len());
        for n in &names {
            let kind = PolicyKind::parse(n).ok_or_else(|| {
                SpecError::invalid(
                    "experiment.policies",
                    format!("unknown policy `{n}` (expected enaam, deta-r or no-management)"),
                )
            })?;
            if !policies.contains(&kind) {
                policies.push(kind);
            }
        }
        let alphas = pick(ex.alphas, ex.alpha, "alphas", vec![0.0, 0.5])?;
        if alphas.is_empty() {
            return Err(SpecError::invalid("experiment.alphas", "must not be empty"));
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(SpecError::invalid(
                "experiment.alphas",
                format!("{a} outside [0, 1]"),
            ));
        }
        let seeds = pick(ex.seeds, ex.seed, "seeds", vec![1])?;
        if seeds.is_empty() {
            return Err(SpecError::invalid("experiment.seeds", "must not be empty"));
        }
        if fc.controller.horizon_t == 0 {
            return Err(SpecError::invalid("controller.horizon_t", "must be >= 1"));
        }
        if fc.controller.gamma_grid_points < 2 {
            return Err(SpecError::invalid(
                "controller.gamma_grid_points",
                "must be >= 2",
            ));
        }
        let initial_beta_kj = ex.initial_beta_kj.unwrap_or(site.beta_max / 2.0);
        if !(0.0..=site.beta_max).contains(&initial_beta_kj) {
            return Err(SpecError::invalid(
                "experiment.initial_beta_kj",
                "must lie in [0, beta_max]",
            ));
        }
        if ex.epochs == 0 {
            return Err(SpecError::invalid("experiment.epochs", "must be >= 1"));
        }
        if ex.period == 0 {
            return Err(SpecError::invalid("experiment.period", "must be >= 1"));
        }
        Ok(Self {
            site,
            traces,
            policies,
            alphas,
            seeds,
            output_dir: ex.output_dir,
            horizon: fc.controller.horizon_t,
            grid_points: fc.controller.gamma_grid_points,
            raw_cost_units: fc.controller.raw_cost_units,
            initial_beta_kj,
            forecaster: ex.forecaster,
            epochs: ex.epochs,
            period: ex.period,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, SpecError> {
        Self::from_file_config(FileConfig::from_toml(text, &[])?)
    }
}
