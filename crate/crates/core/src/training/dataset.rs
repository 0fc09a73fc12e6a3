//! Ranging epochs and PDR tracks assembled from record files.

use std::collections::BTreeMap;

use super::TrainingError;
use crate::channel_sim::records::Recording;
use crate::channel_sim::{CsiFrame, Point};
use crate::pdr::{self, PdrConfig};
use crate::positioning::select_aps;
use crate::ranging::{build_input, ApOffsetTable, RangingInput};

/// Default number of APs used per epoch.
pub const DEFAULT_MAX_APS: usize = 5;

/// One scan cycle: the selected APs' inputs (raw RSS, no offsets).
#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    /// End of the scan cycle.
    pub time: f64,
    pub inputs: Vec<RangingInput>,
    pub ap_positions: Vec<Point>,
    /// True device position at `time`, when labeled.
    pub truth: Option<Point>,
    /// Per selected AP: true distance and line-of-sight majority, when labeled.
    pub link_truth: Option<Vec<(f64, bool)>>,
}

/// A stretch of K consecutive epochs with the PDR track sampled at them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingDataset {
    pub epochs: Vec<Epoch>,
    pub pdr: Vec<Point>,
}

/// Ways a recording can be cut into epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochOptions {
    pub beacons: usize,
    /// Up to this many APs per epoch, strongest mean RSS first; `usize::MAX`
    /// keeps every AP with enough beacons.
    pub max_aps: usize,
}

impl Default for EpochOptions {
    fn default() -> Self {
        Self { beacons: crate::ranging::DEFAULT_BEACONS, max_aps: DEFAULT_MAX_APS }
    }
}

fn interpolate(times: &[f64], pts: &[Point], t: f64) -> Point {
    let i = times.partition_point(|&x| x <= t);
    if i == 0 {
        return pts[0];
    }
    if i >= times.len() {
        return pts[times.len() - 1];
    }
    let (t0, t1) = (times[i - 1], times[i]);
    let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    let (a, b) = (pts[i - 1], pts[i]);
    [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
}

/// Ground-truth position at `t` by linear interpolation of the IMU-rate truth.
pub fn truth_at(rec: &Recording, t: f64) -> Option<Point> {
    let truth = rec.imu_truth.as_ref()?;
    let times: Vec<f64> = rec.imu.iter().map(|s| s.t).collect();
    Some(interpolate(&times, truth, t))
}

/// Groups beacons by scan cycle and AP, keeping the first `beacons` of each
/// AP; APs with fewer are unavailable that cycle.
pub fn epochs_from_recording(rec: &Recording, opts: &EpochOptions) -> Result<Vec<Epoch>, TrainingError> {
    let zero = ApOffsetTable::default();
    let imu_times: Vec<f64> = rec.imu.iter().map(|s| s.t).collect();
    let mut epochs = Vec::with_capacity(rec.scan_times.len());
    let mut cursor = 0;
    let mut start = 0.0;
    for &end in &rec.scan_times {
        let mut by_ap: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        while cursor < rec.beacons.len() && rec.beacons[cursor].timestamp < end {
            if rec.beacons[cursor].timestamp >= start {
                by_ap.entry(rec.beacons[cursor].ap_id).or_default().push(cursor);
            }
            cursor += 1;
        }
        start = end;
        let eligible: Vec<(usize, f64)> = by_ap
            .iter()
            .filter(|(_, v)| v.len() >= opts.beacons)
            .map(|(&ap, v)| {
                let used = &v[..opts.beacons];
                let mean = used
                    .iter()
                    .flat_map(|&i| rec.beacons[i].frames.iter().map(|f| f.rss_dbm))
                    .sum::<f64>()
                    / (2 * opts.beacons) as f64;
                (ap, mean)
            })
            .collect();
        let chosen = select_aps(&eligible, opts.max_aps);
        let mut inputs = Vec::with_capacity(chosen.len());
        let mut ap_positions = Vec::with_capacity(chosen.len());
        let mut links = Vec::with_capacity(chosen.len());
        for ap in chosen {
            let pos = rec
                .ap_position(ap)
                .ok_or_else(|| TrainingError::Input(format!("beacon from unlisted AP {ap}")))?;
            let used = &by_ap[&ap][..opts.beacons];
            let frames: Vec<[CsiFrame; 2]> = used.iter().map(|&i| rec.beacons[i].frames.clone()).collect();
            inputs.push(build_input(&frames, &zero, ap, opts.beacons)?);
            ap_positions.push(pos);
            if rec.is_labeled() {
                let mut dist = 0.0;
                let mut los = 0;
                for &i in used {
                    let b = &rec.beacons[i];
                    let (p, l) = match b.truth {
                        Some(t) => t,
                        None => (interpolate(&imu_times, rec.imu_truth.as_ref().expect("labeled"), b.timestamp), false),
                    };
                    dist += (p[0] - pos[0]).hypot(p[1] - pos[1]);
                    los += usize::from(l);
                }
                links.push((dist / used.len() as f64, 2 * los > used.len()));
            }
        }
        epochs.push(Epoch {
            time: end,
            inputs,
            ap_positions,
            truth: truth_at(rec, end),
            link_truth: rec.is_labeled().then_some(links),
        });
    }
    Ok(epochs)
}

/// PDR positions sampled at each epoch time; epochs past the IMU stream are
/// dropped from `epochs`.
pub fn pdr_track(rec: &Recording, epochs: &mut Vec<Epoch>) -> Result<Vec<Point>, TrainingError> {
    let (_, traj) = pdr::run(&rec.imu, &PdrConfig::default())?;
    epochs.retain(|e| e.time <= traj.end_time && e.time >= traj.times[0]);
    let times: Vec<f64> = epochs.iter().map(|e| e.time).collect();
    Ok(pdr::synchronize(&traj, &times)?)
}

/// Cuts a recording into consecutive datasets of `k` epochs; the remainder
/// is discarded.
pub fn datasets_from_recording(
    rec: &Recording,
    opts: &EpochOptions,
    k: usize,
) -> Result<Vec<TrainingDataset>, TrainingError> {
    let mut epochs = epochs_from_recording(rec, opts)?;
    let pdr = pdr_track(rec, &mut epochs)?;
    let n = epochs.len() / k;
    Ok((0..n)
        .map(|i| TrainingDataset { epochs: epochs[i * k..(i + 1) * k].to_vec(), pdr: pdr[i * k..(i + 1) * k].to_vec() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_clamps_and_blends() {
        let t = [0.0, 1.0, 2.0];
        let p = [[0.0, 0.0], [2.0, 0.0], [2.0, 4.0]];
        assert_eq!(interpolate(&t, &p, -1.0), [0.0, 0.0]);
        assert_eq!(interpolate(&t, &p, 0.5), [1.0, 0.0]);
        assert_eq!(interpolate(&t, &p, 1.75), [2.0, 3.0]);
        assert_eq!(interpolate(&t, &p, 9.0), [2.0, 4.0]);
    }
}
