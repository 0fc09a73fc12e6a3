//! Range-based position tracking.
//!
//! [`ekf`] holds the two-state filter used for Wi-Fi-only positioning and, in
//! a tape-recorded form, inside training. [`multi`] tracks position together
//! with the unknown heading reference using a bank of hypotheses driven by
//! PDR displacements.

pub mod ekf;
pub mod multi;

pub use ekf::{
    ekf_init, ekf_predict, ekf_update, process_noise, EkfConfig, EkfState, EpochMeasurement, Innovation, TapeEkf,
};
pub use multi::{
    mh_init, mh_predict, mh_update, rotation, HypothesisState, MhConfig, MultiHypothesisFilter, Selection,
};

use thiserror::Error;

use crate::channel_sim::Point;

#[derive(Debug, Error, PartialEq)]
pub enum PositioningError {
    #[error("innovation covariance is singular (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("invalid measurement: {0}")]
    Measurement(String),
    #[error("covariance lost symmetry or positive semi-definiteness (min eigenvalue {0:e})")]
    Covariance(f64),
}

/// Picks up to `n_max` APs by descending mean RSS, ties going to the lower id.
/// `candidates` holds `(ap_id, mean_rss)`.
pub fn select_aps(candidates: &[(usize, f64)], n_max: usize) -> Vec<usize> {
    let mut c = candidates.to_vec();
    c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    c.into_iter().take(n_max).map(|(id, _)| id).collect()
}

/// Centroid of a non-empty point set.
pub fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p[0]).sum();
    let sy: f64 = points.iter().map(|p| p[1]).sum();
    [sx / n, sy / n]
}
