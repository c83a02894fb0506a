//! Exogenous series driving the site: offered edge load L(t) in MB and
//! harvested energy H(t) in kJ, one value per slot.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const HOURLY_SLOT_SECONDS: f64 = 3600.0;
pub const DEFAULT_EDGE_SHARE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("load and harvest traces differ: {0}")]
    Mismatch(&'static str),
}

/// A uniformly slotted, non-negative series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTrace {
    name: String,
    slot_seconds: f64,
    values: Vec<f64>,
}

impl TimeSeriesTrace {
    pub fn new(
        name: impl Into<String>,
        slot_seconds: f64,
        values: Vec<f64>,
    ) -> Result<Self, TraceError> {
        if !(slot_seconds > 0.0 && slot_seconds.is_finite()) {
            return Err(TraceError::InvalidParameter {
                name: "slot_seconds",
                reason: "must be a positive number",
            });
        }
        if values.is_empty() {
            return Err(TraceError::Empty);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(TraceError::NonFinite { index });
            }
            if value < 0.0 {
                return Err(TraceError::NegativeValue { index, value });
            }
        }
        Ok(Self {
            name: name.into(),
            slot_seconds,
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn slot_seconds(&self) -> f64 {
        self.slot_seconds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Returns a copy with every value multiplied by `factor` (>= 0).
    pub fn scaled(&self, factor: f64) -> Result<Self, TraceError> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(TraceError::InvalidParameter {
                name: "factor",
                reason: "must be finite and >= 0",
            });
        }
        Self::new(
            self.name.clone(),
            self.slot_seconds,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Load and harvest traces over the same slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceBundle {
    load: TimeSeriesTrace,
    harvested: TimeSeriesTrace,
    edge_share: f64,
}

impl TraceBundle {
    /// `load` must already be the edge-destined share of the traffic.
    pub fn new(
        load: TimeSeriesTrace,
        harvested: TimeSeriesTrace,
        edge_share: f64,
    ) -> Result<Self, TraceError> {
        if load.len() != harvested.len() {
            return Err(TraceError::Mismatch("length"));
        }
        if load.slot_seconds() != harvested.slot_seconds() {
            return Err(TraceError::Mismatch("slot duration"));
        }
        if !(0.0..=1.0).contains(&edge_share) {
            return Err(TraceError::InvalidParameter {
                name: "edge_share",
                reason: "must lie in [0, 1]",
            });
        }
        Ok(Self {
            load,
            harvested,
            edge_share,
        })
    }

    /// Synthetic bundle from the default generators: hourly slots over `days`,
    /// load peaking near `l_max` and harvest scaled to `beta_max` per day.
    pub fn synthetic(
        days: usize,
        l_max: f64,
        noise_sd: f64,
        beta_max: f64,
        seed: u64,
    ) -> Result<Self, TraceError> {
        let load = synth_load_trace(days, l_max, noise_sd, seed)?;
        // decorrelate the two streams while keeping a single user-facing seed
        let harvested = synth_harvest_trace(days, beta_max, seed ^ 0x9e37_79b9_7f4a_7c15)?;
        Self::new(load, harvested, DEFAULT_EDGE_SHARE)
    }

    pub fn load(&self) -> &TimeSeriesTrace {
        &self.load
    }

    pub fn harvested(&self) -> &TimeSeriesTrace {
        &self.harvested
    }

    pub fn edge_share(&self) -> f64 {
        self.edge_share
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn slot_seconds(&self) -> f64 {
        self.load.slot_seconds()
    }
}

/// Relative edge load per hour of day. Night trough at 04:00, daytime plateau,
/// evening peak.
const LOAD_SHAPE: [f64; 24] = [
    0.45, 0.33, 0.24, 0.17, 0.14, 0.16, 0.24, 0.40, 0.58, 0.72, 0.80, 0.84, 0.85, 0.84, 0.84, 0.85,
    0.86, 0.88, 0.90, 0.92, 0.90, 0.82, 0.70, 0.57,
];

/// Hourly edge-destined load (MB) with a diurnal shape.
///
/// Each day is scaled by a random factor in [0.9, 1.0] and every slot receives
/// Gaussian noise of standard deviation `noise_sd`; values are clamped into
/// `[0.01 * l_max, l_max]`. Days are drawn in order from one stream, so a
/// longer trace extends a shorter one with the same seed.
pub fn synth_load_trace(
    days: usize,
    l_max: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<TimeSeriesTrace, TraceError> {
    check_days(days)?;
    if !(l_max > 0.0 && l_max.is_finite()) {
        return Err(TraceError::InvalidParameter {
            name: "l_max",
            reason: "must be > 0",
        });
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(TraceError::InvalidParameter {
            name: "noise_sd",
            reason: "must be >= 0",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).expect("finite non-negative sd");
    let floor = 0.01 * l_max;
    let mut values = Vec::with_capacity(24 * days);
    for _ in 0..days {
        let day_scale: f64 = rng.random_range(0.9..=1.0);
        for shape in LOAD_SHAPE {
            let eps = noise.sample(&mut rng);
            let v = l_max * shape * day_scale + eps;
            values.push(v.clamp(floor, l_max));
        }
    }
    TimeSeriesTrace::new("load_mb", HOURLY_SLOT_SECONDS, values)
}

/// Knobs of the harvest generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestParams {
    /// Expected daily energy as a multiple of `beta_max`.
    pub daily_multiple: f64,
    /// First daylight hour (inclusive).
    pub daylight_start: u32,
    /// Last daylight hour (inclusive).
    pub daylight_end: u32,
}

impl Default for HarvestParams {
    fn default() -> Self {
        Self {
            daily_multiple: 1.0,
            daylight_start: 7,
            daylight_end: 18,
        }
    }
}

/// Solar and wind parts of a synthetic harvest trace (kJ per slot).
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestComponents {
    pub solar: Vec<f64>,
    pub wind: Vec<f64>,
}

impl HarvestComponents {
    pub fn combined(&self) -> Vec<f64> {
        self.solar
            .iter()
            .zip(&self.wind)
            .map(|(s, w)| s + w)
            .collect()
    }
}

// relative wind level (fraction of the solar peak) per day, drawn uniformly
const WIND_LEVEL: (f64, f64) = (0.04, 0.22);

fn solar_shape(hour: u32, p: &HarvestParams) -> f64 {
    if hour < p.daylight_start || hour > p.daylight_end {
        return 0.0;
    }
    let span = f64::from(p.daylight_end - p.daylight_start + 1);
    let x = (f64::from(hour - p.daylight_start) + 0.5) / span;
    libm::sin(core::f64::consts::PI * x)
}

/// Solar bell over the daylight window plus wind during the remaining hours.
///
/// Per day a cloud factor in [0.4, 1] scales the solar bell and a wind level
/// is drawn for the night. The result is scaled so that a clear day with mean
/// wind totals `daily_multiple * beta_max`; single slots are capped at
/// `beta_max`.
pub fn synth_harvest_components(
    days: usize,
    beta_max: f64,
    seed: u64,
    params: &HarvestParams,
) -> Result<HarvestComponents, TraceError> {
    check_days(days)?;
    if !(beta_max > 0.0 && beta_max.is_finite()) {
        return Err(TraceError::InvalidParameter {
            name: "beta_max",
            reason: "must be > 0",
        });
    }
    if !(params.daily_multiple > 0.0 && params.daily_multiple.is_finite()) {
        return Err(TraceError::InvalidParameter {
            name: "daily_multiple",
            reason: "must be > 0",
        });
    }
    if params.daylight_start > params.daylight_end || params.daylight_end > 23 {
        return Err(TraceError::InvalidParameter {
            name: "daylight",
            reason: "window must satisfy start <= end <= 23",
        });
    }
    let night_hours = (0..24).filter(|&h| solar_shape(h, params) == 0.0).count() as f64;
    let mean_wind = 0.5 * (WIND_LEVEL.0 + WIND_LEVEL.1);
    let nominal_day: f64 =
        (0..24).map(|h| solar_shape(h, params)).sum::<f64>() + night_hours * mean_wind;
    let scale = params.daily_multiple * beta_max / nominal_day;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solar = Vec::with_capacity(24 * days);
    let mut wind = Vec::with_capacity(24 * days);
    for _ in 0..days {
        let cloud: f64 = rng.random_range(0.4..=1.0);
        let level: f64 = rng.random_range(WIND_LEVEL.0..=WIND_LEVEL.1);
        for hour in 0..24 {
            let gust: f64 = rng.random_range(0.5..=1.5);
            let s = solar_shape(hour, params);
            if s > 0.0 {
                solar.push((scale * cloud * s).min(beta_max));
                wind.push(0.0);
            } else {
                solar.push(0.0);
                wind.push((scale * level * gust).min(beta_max));
            }
        }
    }
    Ok(HarvestComponents { solar, wind })
}

/// Hourly harvested energy (kJ) with default generator parameters.
pub fn synth_harvest_trace(
    days: usize,
    beta_max: f64,
    seed: u64,
) -> Result<TimeSeriesTrace, TraceError> {
    synth_harvest_trace_with(days, beta_max, seed, &HarvestParams::default())
}

pub fn synth_harvest_trace_with(
    days: usize,
    beta_max: f64,
    seed: u64,
    params: &HarvestParams,
) -> Result<TimeSeriesTrace, TraceError> {
    let parts = synth_harvest_components(days, beta_max, seed, params)?;
    TimeSeriesTrace::new("harvest_kj", HOURLY_SLOT_SECONDS, parts.combined())
}

/// Offered load as a fraction of `l_max`, clamped to at most 1.
pub fn normalize_load(trace: &TimeSeriesTrace, l_max: f64) -> Result<Vec<f64>, TraceError> {
    if !(l_max > 0.0 && l_max.is_finite()) {
        return Err(TraceError::InvalidParameter {
            name: "l_max",
            reason: "must be > 0",
        });
    }
    Ok(trace
        .values()
        .iter()
        .map(|v| normalize_value(*v, l_max))
        .collect())
}

#[inline]
pub(crate) fn normalize_value(load: f64, l_max: f64) -> f64 {
    (load / l_max).clamp(0.0, 1.0)
}

fn check_days(days: usize) -> Result<(), TraceError> {
    if days == 0 {
        return Err(TraceError::InvalidParameter {
            name: "days",
            reason: "must be >= 1",
        });
    }
    Ok(())
}
