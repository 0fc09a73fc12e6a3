//! Pedestrian dead reckoning: steps from vertical acceleration, headings
//! from the orientation stream, and a trajectory in the sensor's own frame.

mod filter;
mod steps;

pub use filter::{lowpass_z, zero_phase_gain};
pub use steps::{detect_steps, step_length, StepDetector};

use thiserror::Error;

use crate::channel_sim::{ImuSample, Point};

/// α of the stride model L = α·(a_max − a_min)^¼.
pub const STEP_COEFFICIENT: f64 = 0.55;
pub const DEFAULT_CUTOFF_HZ: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum PdrError {
    #[error("cutoff {cutoff_hz} Hz must lie in (0, {nyquist_hz}) Hz")]
    Cutoff { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("IMU stream is not uniformly sampled near t = {0}")]
    NonUniform(f64),
    #[error("no heading sample covers step time {0}")]
    MissingHeading(f64),
    #[error("time {t} lies outside the trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepEvent {
    /// Time of the valley that completes the step.
    pub time: f64,
    pub length: f64,
    pub peak_accel: f64,
    pub valley_accel: f64,
}

/// Positions after each step, starting at the initial position.
#[derive(Clone, Debug, PartialEq)]
pub struct PdrTrajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Point>,
    /// Last instant covered by the sensor stream.
    pub end_time: f64,
}

/// Moving direction for heading φ: u(φ) = [−sin φ, cos φ].
pub fn direction(phi: f64) -> Point {
    [-phi.sin(), phi.cos()]
}

/// Accumulates p(t) = p(t−1) + L·u(φ) over `steps`.
///
/// `heading_times`/`headings` form a sampled stream; a step uses the latest
/// sample at or before its time. The trajectory starts at `origin` at the
/// first heading time.
pub fn integrate(
    steps: &[StepEvent],
    heading_times: &[f64],
    headings: &[f64],
    origin: Point,
) -> Result<PdrTrajectory, PdrError> {
    assert_eq!(heading_times.len(), headings.len());
    let (Some(&start), Some(&end)) = (heading_times.first(), heading_times.last()) else {
        return match steps.first() {
            Some(s) => Err(PdrError::MissingHeading(s.time)),
            None => Ok(PdrTrajectory { times: vec![0.0], positions: vec![origin], end_time: 0.0 }),
        };
    };
    let mut times = vec![start];
    let mut positions = vec![origin];
    let mut p = origin;
    for s in steps {
        if s.time < start || s.time > end {
            return Err(PdrError::MissingHeading(s.time));
        }
        let i = heading_times.partition_point(|&t| t <= s.time) - 1;
        let u = direction(headings[i]);
        p = [p[0] + s.length * u[0], p[1] + s.length * u[1]];
        times.push(s.time);
        positions.push(p);
    }
    Ok(PdrTrajectory { times, positions, end_time: end })
}

/// Sample-and-hold of the trajectory at each epoch time. A step that lands
/// exactly on an epoch time is already applied.
pub fn synchronize(traj: &PdrTrajectory, epoch_times: &[f64]) -> Result<Vec<Point>, PdrError> {
    let start = traj.times[0];
    epoch_times
        .iter()
        .map(|&t| {
            if !(t >= start && t <= traj.end_time) {
                return Err(PdrError::OutOfSpan { t, start, end: traj.end_time });
            }
            let i = traj.times.partition_point(|&x| x <= t) - 1;
            Ok(traj.positions[i])
        })
        .collect()
}

/// Detector configuration for the whole IMU-to-trajectory chain.
#[derive(Clone, Debug, PartialEq)]
pub struct PdrConfig {
    pub cutoff_hz: f64,
    pub detector: StepDetector,
}

impl Default for PdrConfig {
    fn default() -> Self {
        Self { cutoff_hz: DEFAULT_CUTOFF_HZ, detector: StepDetector::default() }
    }
}

/// Filter, detect and integrate an IMU stream starting at the origin.
pub fn run(imu: &[ImuSample], cfg: &PdrConfig) -> Result<(Vec<StepEvent>, PdrTrajectory), PdrError> {
    let times: Vec<f64> = imu.iter().map(|s| s.t).collect();
    let rate = sample_rate(&times)?;
    let az: Vec<f64> = imu.iter().map(|s| s.accel_z).collect();
    let filtered = lowpass_z(&az, cfg.cutoff_hz, rate)?;
    let steps = detect_steps(&times, &filtered, &cfg.detector);
    let headings: Vec<f64> = imu.iter().map(|s| s.heading).collect();
    let traj = integrate(&steps, &times, &headings, [0.0, 0.0])?;
    Ok((steps, traj))
}

/// Sample rate of a stream, rejecting jitter above 1% of the period.
fn sample_rate(times: &[f64]) -> Result<f64, PdrError> {
    if times.len() < 2 {
        return Ok(100.0);
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 0.01 * dt {
            return Err(PdrError::NonUniform(w[0]));
        }
    }
    Ok(1.0 / dt)
}
