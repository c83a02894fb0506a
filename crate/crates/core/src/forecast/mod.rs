//! One-step and multi-step forecasting of load and harvest series.

mod adam;
mod lstm;
mod naive;

pub use adam::Adam;
pub use lstm::{
    gradient_check, predict_horizon, predict_next, relative_gradient_error, train_lstm,
    train_lstm_with, LstmModel, LstmStream, Normalization, TrainConfig, TrainReport, PARAM_GROUPS,
};
pub use naive::seasonal_naive;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("insufficient history: need {needed} values, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Root mean square error of paired slices (over the shorter length).
pub fn rmse(predicted: &[f64], actual: &[f64]) -> f64 {
    let n = predicted.len().min(actual.len());
    if n == 0 {
        return 0.0;
    }
    let sse: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    libm::sqrt(sse / n as f64)
}
