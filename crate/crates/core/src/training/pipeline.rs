//! Ranging plus filtering over a sequence of epochs.

use super::dataset::Epoch;
use super::TrainingError;
use crate::channel_sim::Point;
use crate::positioning::{
    ekf_init, ekf_predict, ekf_update, EkfConfig, EkfState, EpochMeasurement, MhConfig, MultiHypothesisFilter,
};
use crate::ranging::{ApOffsetTable, Ranger, RangingInput, RangingOutput};

/// Inputs per network call; bounds the im2col buffers.
const CHUNK: usize = 512;

/// Ranges every selected AP of every epoch, adding `offsets` to RSS first.
pub fn range_epochs(
    ranger: &Ranger<'_>,
    epochs: &[Epoch],
    offsets: &ApOffsetTable,
) -> Result<Vec<Vec<RangingOutput>>, TrainingError> {
    let flat: Vec<RangingInput> = epochs
        .iter()
        .flat_map(|e| e.inputs.iter())
        .map(|i| {
            let mut i = i.clone();
            let o = offsets.get(i.ap_id);
            i.rss.iter_mut().for_each(|r| *r += o);
            i
        })
        .collect();
    let mut out = Vec::with_capacity(flat.len());
    for chunk in flat.chunks(CHUNK) {
        out.extend(ranger.range_batch(chunk)?);
    }
    let mut it = out.into_iter();
    Ok(epochs.iter().map(|e| it.by_ref().take(e.inputs.len()).collect()).collect())
}

fn measurement(e: &Epoch, r: &[RangingOutput]) -> Option<EpochMeasurement> {
    (!e.inputs.is_empty()).then(|| EpochMeasurement {
        aps: e.ap_positions.clone(),
        d: r.iter().map(|o| o.d_hat).collect(),
        s: r.iter().map(|o| o.s_hat).collect(),
    })
}

/// First epoch that hears any AP; its APs seed the filters.
fn first_heard(epochs: &[Epoch]) -> Result<&Epoch, TrainingError> {
    epochs
        .iter()
        .find(|e| !e.inputs.is_empty())
        .ok_or_else(|| TrainingError::Input("no epoch has any usable AP".into()))
}

pub fn initial_state(epochs: &[Epoch], cfg: &EkfConfig) -> Result<EkfState, TrainingError> {
    Ok(ekf_init(&first_heard(epochs)?.ap_positions, cfg.s_xy, cfg.s_xy))
}

/// Wi-Fi-only tracking: random-walk prediction, range update.
pub fn run_wifi(
    epochs: &[Epoch],
    ranges: &[Vec<RangingOutput>],
    cfg: &EkfConfig,
) -> Result<Vec<Point>, TrainingError> {
    let mut state = initial_state(epochs, cfg)?;
    let mut out = Vec::with_capacity(epochs.len());
    for (k, (e, r)) in epochs.iter().zip(ranges).enumerate() {
        if k > 0 {
            state = ekf_predict(&state, cfg.speed, e.time - epochs[k - 1].time);
        }
        if let Some(m) = measurement(e, r) {
            state = ekf_update(&state, &m, cfg)?.0;
        }
        out.push(state.position());
    }
    Ok(out)
}

/// Output of the fused tracker.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedTrack {
    pub positions: Vec<Point>,
    /// Original index of the selected hypothesis per epoch.
    pub selected: Vec<usize>,
    pub phi_ref: Vec<f64>,
    /// Squared innovation norm of the selected hypothesis.
    pub innovation: Vec<f64>,
}

/// Wi-Fi plus PDR tracking with the hypothesis bank; `pdr` holds the PDR
/// position at each epoch.
pub fn run_fused(
    epochs: &[Epoch],
    ranges: &[Vec<RangingOutput>],
    pdr: &[Point],
    cfg: &MhConfig,
) -> Result<FusedTrack, TrainingError> {
    if pdr.len() != epochs.len() {
        return Err(TrainingError::Input("PDR track and epochs differ in length".into()));
    }
    let first = first_heard(epochs)?;
    let mut filter = MultiHypothesisFilter::new(&first.ap_positions, epochs[0].time, *cfg);
    let mut track = FusedTrack { positions: vec![], selected: vec![], phi_ref: vec![], innovation: vec![] };
    for (k, (e, r)) in epochs.iter().zip(ranges).enumerate() {
        let dp = if k == 0 { [0.0, 0.0] } else { [pdr[k][0] - pdr[k - 1][0], pdr[k][1] - pdr[k - 1][1]] };
        let m = measurement(e, r);
        let id = filter.step(e.time, dp, m.as_ref())?;
        let best = filter.best_state();
        track.positions.push(best.position());
        track.selected.push(id);
        track.phi_ref.push(best.phi_ref());
        track.innovation.push(best.last_innovation);
    }
    Ok(track)
}
