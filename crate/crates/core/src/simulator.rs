//! Closed-loop simulation over a trace bundle.
//!
//! Each slot: read the buffer level, forecast the next slots from past
//! observations only, ask the policy for a control, charge the site draw at
//! the true load, and step the buffer with the true harvest.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controller::{
    cost_j, deta_r_decide, enaam_decide, no_management_decide, ControlError, CostWeights,
    Forecasts, LookaheadParams,
};
use crate::error::ConfigError;
use crate::forecast::{rmse, seasonal_naive, LstmModel, LstmStream};
use crate::power::{site_energy, step_buffer, vm_count, ControlAction, SiteConfig, SystemState};
use crate::traces::{normalize_value, TraceBundle};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("trace bundle is empty")]
    EmptyBundle,
    #[error("trace slot duration {trace} s does not match configured {config} s")]
    SlotMismatch { trace: f64, config: f64 },
    #[error("initial buffer {0} kJ outside [0, beta_max]")]
    InitialBeta(f64),
    #[error("non-finite value in slot {slot}")]
    NonFinite { slot: usize },
    #[error("run lengths differ: {test} vs {baseline}")]
    LengthMismatch { test: usize, baseline: usize },
    #[error("baseline drained no energy in slot {slot}")]
    ZeroBaseline { slot: usize },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PolicyKind {
    #[cfg_attr(feature = "serde", serde(rename = "enaam"))]
    Enaam,
    #[cfg_attr(feature = "serde", serde(rename = "deta-r"))]
    DetaR,
    #[cfg_attr(feature = "serde", serde(rename = "no-management"))]
    NoManagement,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::Enaam,
        PolicyKind::DetaR,
        PolicyKind::NoManagement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Enaam => "enaam",
            PolicyKind::DetaR => "deta-r",
            PolicyKind::NoManagement => "no-management",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl core::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A policy and its parameters. `lookahead.weights` also prices the realized
/// per-slot cost for every policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub lookahead: LookaheadParams,
    /// Seeds the randomized heuristic.
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, weights: CostWeights, seed: u64) -> Self {
        Self {
            kind,
            lookahead: LookaheadParams::new(weights),
            seed,
        }
    }
}

/// Where the controller's load and harvest estimates come from.
#[derive(Debug, Clone, Copy)]
pub enum ForecastSource<'a> {
    /// Repeat the previous season.
    SeasonalNaive { period: usize },
    /// Trained networks, with the seasonal-naive rule for the first `period` slots.
    Lstm {
        load: &'a LstmModel,
        harvest: &'a LstmModel,
        period: usize,
    },
    /// True future values (non-causal; for analysis only).
    Perfect,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlotRecord {
    pub slot: usize,
    pub state_before: SystemState,
    pub action: ControlAction,
    /// Active VMs under `action`.
    pub vms: u32,
    /// True normalized load.
    pub phi: f64,
    /// Share of the normalized load processed locally, `min(gamma, phi)`.
    pub gamma_served: f64,
    /// Share pushed to the remote cloud, `max(0, phi - gamma_served)`.
    pub remote_share: f64,
    pub drained_kj: f64,
    pub harvested_kj: f64,
    pub buffer_after: f64,
    pub deficit_kj: f64,
    pub spill_kj: f64,
    pub cost_j_realized: f64,
    /// One-slot-ahead load estimate the controller used (MB).
    pub forecast_load: f64,
    pub true_load: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunMetrics {
    pub slots: usize,
    /// Mean per-slot savings against a baseline run, when one was compared.
    pub mean_savings: Option<f64>,
    /// Mean utilization factor.
    pub mean_utilization: f64,
    pub utilization_min: f64,
    pub utilization_max: f64,
    pub outage_slots: usize,
    pub total_drained_kj: f64,
    pub total_harvested_kj: f64,
    pub total_deficit_kj: f64,
    pub total_spill_kj: f64,
    pub initial_beta_kj: f64,
    pub final_beta_kj: f64,
    pub mean_cost_j: f64,
    pub forecast_rmse_load: f64,
}

impl RunMetrics {
    pub fn from_records(records: &[SlotRecord], initial_beta: f64) -> Self {
        let n = records.len().max(1) as f64;
        let gammas = records.iter().map(|r| r.action.gamma);
        let forecasts: Vec<f64> = records.iter().map(|r| r.forecast_load).collect();
        let truth: Vec<f64> = records.iter().map(|r| r.true_load).collect();
        Self {
            slots: records.len(),
            mean_savings: None,
            mean_utilization: gammas.clone().sum::<f64>() / n,
            utilization_min: gammas.clone().fold(f64::INFINITY, f64::min),
            utilization_max: gammas.fold(f64::NEG_INFINITY, f64::max),
            outage_slots: records.iter().filter(|r| r.deficit_kj > 0.0).count(),
            total_drained_kj: records.iter().map(|r| r.drained_kj).sum(),
            total_harvested_kj: records.iter().map(|r| r.harvested_kj).sum(),
            total_deficit_kj: records.iter().map(|r| r.deficit_kj).sum(),
            total_spill_kj: records.iter().map(|r| r.spill_kj).sum(),
            initial_beta_kj: initial_beta,
            final_beta_kj: records.last().map_or(initial_beta, |r| r.buffer_after),
            mean_cost_j: records.iter().map(|r| r.cost_j_realized).sum::<f64>() / n,
            forecast_rmse_load: rmse(&forecasts, &truth),
        }
    }

    /// `sum(drained) - sum(harvested) - (beta0 - beta_end - spill + deficit)`,
    /// zero up to rounding.
    pub fn energy_ledger_residual(&self) -> f64 {
        (self.total_drained_kj - self.total_harvested_kj)
            - (self.initial_beta_kj - self.final_beta_kj - self.total_spill_kj
                + self.total_deficit_kj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<SlotRecord>,
    pub metrics: RunMetrics,
}

/// Produces causal estimates for the slots `t..t + k`.
struct Forecaster<'a> {
    source: ForecastSource<'a>,
    load_stream: Option<LstmStream<'a>>,
    harvest_stream: Option<LstmStream<'a>>,
}

impl<'a> Forecaster<'a> {
    fn new(source: ForecastSource<'a>) -> Self {
        let (load_stream, harvest_stream) = match source {
            ForecastSource::Lstm { load, harvest, .. } => {
                (Some(load.stream()), Some(harvest.stream()))
            }
            _ => (None, None),
        };
        Self {
            source,
            load_stream,
            harvest_stream,
        }
    }

    fn observe(&mut self, load: f64, harvest: f64) {
        if let Some(s) = self.load_stream.as_mut() {
            s.observe(load);
        }
        if let Some(s) = self.harvest_stream.as_mut() {
            s.observe(harvest);
        }
    }

    /// Seasonal naive once a full period is available, persistence before
    /// that, zero with no history at all.
    fn fallback(history: &[f64], period: usize, k: usize) -> Vec<f64> {
        match seasonal_naive(history, period, k) {
            Ok(v) => v,
            Err(_) => vec![history.last().copied().unwrap_or(0.0); k],
        }
    }

    fn estimate(
        &self,
        t: usize,
        k: usize,
        bundle: &TraceBundle,
        stream: Option<&LstmStream<'_>>,
        series: &[f64],
    ) -> Vec<f64> {
        let history = &series[..t];
        match self.source {
            ForecastSource::SeasonalNaive { period } => Self::fallback(history, period, k),
            ForecastSource::Lstm { period, .. } => {
                if t < period {
                    Self::fallback(history, period, k)
                } else {
                    stream
                        .and_then(|s| s.forecast(k))
                        .unwrap_or_else(|| Self::fallback(history, period, k))
                }
            }
            ForecastSource::Perfect => {
                let last = bundle.len() - 1;
                (0..k).map(|j| series[(t + j).min(last)]).collect()
            }
        }
    }

    fn forecast(&self, t: usize, k: usize, bundle: &TraceBundle) -> (Vec<f64>, Vec<f64>) {
        let load = self.estimate(
            t,
            k,
            bundle,
            self.load_stream.as_ref(),
            bundle.load().values(),
        );
        let harvest = self.estimate(
            t,
            k,
            bundle,
            self.harvest_stream.as_ref(),
            bundle.harvested().values(),
        );
        (load, harvest)
    }
}

/// Runs `policy` over every slot of `bundle` starting from `initial_beta` kJ.
pub fn run(
    bundle: &TraceBundle,
    policy: &PolicyConfig,
    cfg: &SiteConfig,
    forecaster: ForecastSource<'_>,
    initial_beta: f64,
) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    if bundle.is_empty() {
        return Err(SimError::EmptyBundle);
    }
    if bundle.slot_seconds() != cfg.slot_seconds {
        return Err(SimError::SlotMismatch {
            trace: bundle.slot_seconds(),
            config: cfg.slot_seconds,
        });
    }
    if !(0.0..=cfg.beta_max).contains(&initial_beta) {
        return Err(SimError::InitialBeta(initial_beta));
    }
    let lookahead = policy.lookahead;
    if lookahead.horizon == 0 {
        return Err(ControlError::ZeroHorizon.into());
    }
    let k = lookahead.horizon.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut fc = Forecaster::new(forecaster);
    let mut records = Vec::with_capacity(bundle.len());
    let mut state = SystemState::new(cfg.m_vms, initial_beta);

    for t in 0..bundle.len() {
        let (mut load_hat, harvest_hat) = fc.forecast(t, k, bundle);
        for l in load_hat.iter_mut() {
            *l = l.min(cfg.l_max);
        }
        let action = match policy.kind {
            PolicyKind::Enaam => {
                let forecasts = Forecasts {
                    load: &load_hat,
                    harvest: &harvest_hat,
                };
                enaam_decide(state, forecasts, &lookahead, cfg)?.action
            }
            PolicyKind::DetaR => {
                deta_r_decide(load_hat[0], load_hat[1], state.buffer_kj, &mut rng, cfg)
            }
            PolicyKind::NoManagement => no_management_decide(),
        };

        let true_load = bundle.load().values()[t];
        let harvested = bundle.harvested().values()[t];
        let phi = normalize_value(true_load, cfg.l_max);
        let drained = site_energy(action, phi, cfg);
        let step = step_buffer(state.buffer_kj, harvested, drained, cfg);
        let gamma_served = action.gamma.min(phi);
        let record = SlotRecord {
            slot: t,
            state_before: state,
            action,
            vms: vm_count(action.gamma, cfg.m_vms),
            phi,
            gamma_served,
            remote_share: (phi - gamma_served).max(0.0),
            drained_kj: drained,
            harvested_kj: harvested,
            buffer_after: step.next,
            deficit_kj: step.deficit,
            spill_kj: step.spill,
            cost_j_realized: cost_j(action, phi, &lookahead.weights, cfg),
            forecast_load: load_hat[0],
            true_load,
        };
        if !(record.drained_kj.is_finite()
            && record.buffer_after.is_finite()
            && record.cost_j_realized.is_finite()
            && record.forecast_load.is_finite())
        {
            return Err(SimError::NonFinite { slot: t });
        }
        state = SystemState::new(record.vms, step.next);
        records.push(record);
        fc.observe(true_load, harvested);
    }

    let metrics = RunMetrics::from_records(&records, initial_beta);
    Ok(RunOutput { records, metrics })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Savings {
    /// `1 - drained_test / drained_baseline` per slot.
    pub per_slot: Vec<f64>,
    pub mean: f64,
}

/// Per-slot energy savings of `test` relative to `baseline`.
pub fn compare_savings(test: &[SlotRecord], baseline: &[SlotRecord]) -> Result<Savings, SimError> {
    if test.len() != baseline.len() {
        return Err(SimError::LengthMismatch {
            test: test.len(),
            baseline: baseline.len(),
        });
    }
    let per_slot = test
        .iter()
        .zip(baseline)
        .map(|(a, b)| {
            if b.drained_kj <= 0.0 {
                Err(SimError::ZeroBaseline { slot: b.slot })
            } else {
                Ok(1.0 - a.drained_kj / b.drained_kj)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mean = if per_slot.is_empty() {
        0.0
    } else {
        per_slot.iter().sum::<f64>() / per_slot.len() as f64
    };
    Ok(Savings { per_slot, mean })
}

/// Mean of `values` grouped by position within a day of `slots_per_day`.
pub fn hourly_profile(values: &[f64], slots_per_day: usize) -> Vec<f64> {
    if slots_per_day == 0 {
        return Vec::new();
    }
    let mut sums = vec![0.0; slots_per_day];
    let mut counts = vec![0usize; slots_per_day];
    for (i, v) in values.iter().enumerate() {
        sums[i % slots_per_day] += v;
        counts[i % slots_per_day] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}
