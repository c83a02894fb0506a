use alloc::vec::Vec;

use super::ForecastError;

/// Repeats the last observed season: element `j` (0-based) of the forecast is
/// `history[len - period + (j mod period)]`.
pub fn seasonal_naive(history: &[f64], period: usize, k: usize) -> Result<Vec<f64>, ForecastError> {
    if period == 0 {
        return Err(ForecastError::InvalidParameter("period must be >= 1"));
    }
    if history.len() < period {
        return Err(ForecastError::InsufficientHistory {
            needed: period,
            got: history.len(),
        });
    }
    let base = history.len() - period;
    Ok((0..k).map(|j| history[base + j % period]).collect())
}
