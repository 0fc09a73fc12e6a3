//! Positioning and ranging error summaries.

use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::channel_sim::Point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Nearest-rank 90th percentile.
    pub p90: f64,
    /// `(error, fraction of errors ≤ error)`, ascending.
    pub cdf: Vec<(f64, f64)>,
}

/// Nearest-rank percentile: the smallest value with at least `q` of the
/// sample at or below it.
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn error_metrics(errors: &[f64]) -> Result<Metrics, TrainingError> {
    if errors.is_empty() {
        return Err(TrainingError::Input("no errors to summarise".into()));
    }
    if !errors.iter().all(|e| e.is_finite()) {
        return Err(TrainingError::NonFinite("positioning error".into()));
    }
    let n = errors.len() as f64;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let cdf = sorted.iter().enumerate().map(|(i, &e)| (e, (i + 1) as f64 / n)).collect();
    Ok(Metrics { count: errors.len(), mae, rmse, p90: percentile_nearest_rank(&sorted, 0.9), cdf })
}

/// Euclidean errors of a trajectory against truth, point by point.
pub fn evaluate(trajectory: &[Point], truth: &[Point]) -> Result<Metrics, TrainingError> {
    if trajectory.len() != truth.len() {
        return Err(TrainingError::Input("trajectory and truth differ in length".into()));
    }
    let errors: Vec<f64> = trajectory.iter().zip(truth).map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1])).collect();
    error_metrics(&errors)
}
