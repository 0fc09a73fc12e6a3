//! Per-AP distance and uncertainty estimates from a handful of beacons.
//!
//! Four families share one output contract: a log-distance path-loss law, a
//! quadratic in RSS, a LOS-aware path-loss law keyed on direct-path energy,
//! and learned networks (a CNN over CSI amplitudes plus RSS, or an FC net on
//! RSS only).

mod baselines;
mod nn;

pub use baselines::{
    cupid_range, edp_ratio, pathloss_distance, pathloss_range, polynomial_range, CalibrationParams, CupidParams,
    LinearStd, PathLossParams, PolynomialParams,
};
pub use nn::{
    NnModel, Padding, Topology, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, OFFSET_UNIT_DB, RSS_CENTER_DBM, RSS_SCALE_DB,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_sim::{CsiFrame, NUM_SUBCARRIERS};
use crate::nn_core::NnError;

/// Upper bound of the distance output (m).
pub const D_MAX: f64 = 100.0;
/// Upper bound of the standard-deviation output (m).
pub const S_MAX: f64 = 10.0;
/// Lower clamp for model-based backends, keeping filter variances positive.
pub const MIN_OUTPUT: f64 = 0.1;
/// Beacons per AP fed to a ranger.
pub const DEFAULT_BEACONS: usize = 4;

#[derive(Debug, Error)]
pub enum RangingError {
    #[error("invalid ranging input: {0}")]
    Input(String),
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Everything one AP contributes to one ranging epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct RangingInput {
    pub ap_id: usize,
    pub beacons: usize,
    /// `[antenna][beacon][sub-carrier]` amplitudes, flattened.
    pub csi: Vec<f64>,
    /// Complex responses in the same layout as `csi`.
    pub csi_complex: Vec<Complex64>,
    /// `[antenna][beacon]` RSS in dBm with the AP offset applied.
    pub rss: Vec<f64>,
}

impl RangingInput {
    /// False for RSS-only inputs.
    pub fn has_csi(&self) -> bool {
        !self.csi.is_empty()
    }

    /// Mean of the RSS entries, taken around the first one so that equal
    /// entries give that value exactly.
    pub fn mean_rss(&self) -> f64 {
        let r0 = self.rss[0];
        r0 + self.rss.iter().map(|r| r - r0).sum::<f64>() / self.rss.len() as f64
    }

    pub fn validate(&self) -> Result<(), RangingError> {
        let b = self.beacons;
        if b == 0 {
            return Err(RangingError::Input("no beacons".into()));
        }
        let csi_ok = self.csi.is_empty() || self.csi.len() == 2 * b * NUM_SUBCARRIERS;
        if !csi_ok
            || self.csi_complex.len() != self.csi.len()
            || self.rss.len() != 2 * b
        {
            return Err(RangingInput::shape_error(b));
        }
        if !self.csi.iter().chain(&self.rss).all(|v| v.is_finite()) {
            return Err(RangingError::Input("non-finite entry".into()));
        }
        Ok(())
    }

    fn shape_error(b: usize) -> RangingError {
        RangingError::Input(format!("buffers do not match {b} beacons"))
    }
}

/// Per-AP RSS corrections (dB), zero for unknown APs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ApOffsetTable {
    pub offsets: Vec<f64>,
}

impl ApOffsetTable {
    pub fn zeros(n: usize) -> Self {
        Self { offsets: vec![0.0; n] }
    }

    pub fn get(&self, ap: usize) -> f64 {
        self.offsets.get(ap).copied().unwrap_or(0.0)
    }
}

/// Packs `b` two-antenna beacon receptions from one AP into a ranging input.
pub fn build_input(
    frames: &[[CsiFrame; 2]],
    offsets: &ApOffsetTable,
    ap_id: usize,
    b: usize,
) -> Result<RangingInput, RangingError> {
    if frames.len() != b {
        return Err(RangingError::Input(format!("expected {b} beacons, got {}", frames.len())));
    }
    let offset = offsets.get(ap_id);
    let mut csi = Vec::with_capacity(2 * b * NUM_SUBCARRIERS);
    let mut csi_complex = Vec::with_capacity(2 * b * NUM_SUBCARRIERS);
    let mut rss = Vec::with_capacity(2 * b);
    for antenna in 0..2 {
        for pair in frames {
            let f = &pair[antenna];
            if f.ap_id != ap_id {
                return Err(RangingError::Input(format!("frame from AP {} mixed into AP {ap_id}", f.ap_id)));
            }
            if f.antenna_id as usize != antenna || f.h.len() != frames[0][0].h.len() {
                return Err(RangingError::Input("malformed antenna pair".into()));
            }
            csi.extend(f.h.iter().map(|v| v.norm()));
            csi_complex.extend_from_slice(&f.h);
            rss.push(f.rss_dbm + offset);
        }
    }
    let input = RangingInput { ap_id, beacons: b, csi, csi_complex, rss };
    input.validate()?;
    Ok(input)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangingOutput {
    pub d_hat: f64,
    pub s_hat: f64,
}

impl RangingOutput {
    /// Clamp used by the model-based backends.
    pub fn clamped(d: f64, s: f64) -> Self {
        let top = |m: f64| m * (1.0 - 1e-9);
        let c = |v: f64, hi: f64| if v.is_nan() { hi } else { v.clamp(MIN_OUTPUT, hi) };
        Self { d_hat: c(d, top(D_MAX)), s_hat: c(s, top(S_MAX)) }
    }
}

/// Selectable backend names.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Pathloss,
    Polynomial,
    Cupid,
    Fc,
    Cnn,
}

impl BackendKind {
    pub const ALL: [BackendKind; 5] =
        [BackendKind::Pathloss, BackendKind::Polynomial, BackendKind::Cupid, BackendKind::Fc, BackendKind::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Pathloss => "pathloss",
            BackendKind::Polynomial => "polynomial",
            BackendKind::Cupid => "cupid",
            BackendKind::Fc => "fc",
            BackendKind::Cnn => "cnn",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, BackendKind::Fc | BackendKind::Cnn)
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown backend `{s}`"))
    }
}

/// A ready-to-use backend.
#[derive(Clone, Copy, Debug)]
pub enum Ranger<'a> {
    PathLoss(&'a PathLossParams),
    Polynomial(&'a PolynomialParams),
    Cupid(&'a CupidParams),
    Nn(&'a NnModel),
}

impl Ranger<'_> {
    pub fn range(&self, input: &RangingInput) -> Result<RangingOutput, RangingError> {
        Ok(self.range_batch(std::slice::from_ref(input))?[0])
    }

    /// Ranges many inputs; neural models evaluate them as one batch.
    pub fn range_batch(&self, inputs: &[RangingInput]) -> Result<Vec<RangingOutput>, RangingError> {
        match self {
            Ranger::PathLoss(p) => inputs.iter().map(|i| pathloss_range(i, p)).collect(),
            Ranger::Polynomial(p) => inputs.iter().map(|i| polynomial_range(i, p)).collect(),
            Ranger::Cupid(p) => inputs.iter().map(|i| cupid_range(i, p)).collect(),
            Ranger::Nn(m) => m.range_batch(inputs),
        }
    }
}
