//! Unsupervised training of the ranging module.
//!
//! The Wi-Fi trajectory produced by ranging plus the EKF is scored against
//! the PDR track after a closed-form rigid alignment ([`align`]) and against
//! its own ranges ([`cost`]); [`train`] pushes the gradient of that score back
//! into the network weights and AP offsets. [`calibrate`] fits the
//! closed-form baselines on labeled walks and [`metrics`] summarises errors.

pub mod align;
pub mod calibrate;
pub mod cost;
pub mod dataset;
pub mod metrics;
pub mod pipeline;
pub mod train;

pub use align::{optimal_transform, residual, rotate, sensor_cost, sensor_cost_tape, AlignmentResult};
pub use calibrate::{calibration_samples, fit_baselines, CalibrationSample, FitReport};
pub use cost::{geometric_cost, unified_cost};
pub use dataset::{datasets_from_recording, epochs_from_recording, pdr_track, truth_at, Epoch, EpochOptions, TrainingDataset};
pub use metrics::{error_metrics, evaluate, percentile_nearest_rank, Metrics};
pub use pipeline::{range_epochs, run_fused, run_wifi, FusedTrack};
pub use train::{
    dataset_cost, dataset_cost_tape, dataset_gradient, split_datasets, test_mae, train, BestEpoch, EpochRecord, TestWalk, TrainConfig,
    TrainState, Trainer,
};

use thiserror::Error;

use crate::nn_core::NnError;
use crate::pdr::PdrError;
use crate::positioning::PositioningError;
use crate::ranging::RangingError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training aborted at epoch {epoch}, dataset {dataset}: {reason}")]
    Aborted { epoch: usize, dataset: usize, reason: String },
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Ranging(#[from] RangingError),
    #[error(transparent)]
    Pdr(#[from] PdrError),
    #[error(transparent)]
    Positioning(#[from] PositioningError),
}

impl TrainingError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            TrainingError::NonFinite(_) | TrainingError::Aborted { .. } => true,
            TrainingError::Nn(e) => matches!(e, NnError::NonFinite(_) | NnError::Singular { .. }),
            TrainingError::Ranging(RangingError::Nn(e)) => matches!(e, NnError::NonFinite(_) | NnError::Singular { .. }),
            TrainingError::Positioning(e) => !matches!(e, PositioningError::Measurement(_)),
            _ => false,
        }
    }
}
