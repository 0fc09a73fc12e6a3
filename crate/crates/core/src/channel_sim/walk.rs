//! Device walks: ground truth, IMU stream and beacon receptions.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{
    cir_to_csi, distance, quantize, synthesize_cir, CsiFrame, Point, SimError, SiteConfig,
};
use crate::pdr::{zero_phase_gain, DEFAULT_CUTOFF_HZ, STEP_COEFFICIENT};

/// Standard gravity, the resting value of the vertical acceleration.
pub const GRAVITY: f64 = 9.80665;

/// Gait and inertial sensor model.
#[derive(Clone, Debug, PartialEq)]
pub struct ImuParams {
    pub sample_rate: f64,
    /// Nominal stride; the walk uses the closest length that divides the path.
    pub step_length: f64,
    /// White noise on vertical acceleration (m/s² std).
    pub accel_noise: f64,
    /// White noise on the heading stream (rad std).
    pub heading_noise: f64,
    /// Angle between the sensor frame and the site frame; drawn uniformly when `None`.
    pub reference_offset: Option<f64>,
    /// Standing time before and after walking (s).
    pub lead_in: f64,
    pub lead_out: f64,
}

impl Default for ImuParams {
    fn default() -> Self {
        Self {
            sample_rate: 100.0,
            step_length: 0.7,
            accel_noise: 0.2,
            heading_noise: 0.02,
            reference_offset: None,
            lead_in: 2.0,
            lead_out: 2.0,
        }
    }
}

impl ImuParams {
    /// No sensor noise.
    pub fn clean() -> Self {
        Self { accel_noise: 0.0, heading_noise: 0.0, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Vertical acceleration in the site frame (m/s²).
    pub accel_z: f64,
    /// Heading relative to the unknown reference direction (rad).
    pub heading: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkTruth {
    /// Position at every IMU tick.
    pub positions: Vec<Point>,
    /// Site-frame heading at every IMU tick.
    pub headings: Vec<f64>,
    pub reference_offset: f64,
    pub step_times: Vec<f64>,
    pub step_length: f64,
}

/// One beacon heard on both antennas.
#[derive(Clone, Debug, PartialEq)]
pub struct BeaconReception {
    pub ap_id: usize,
    pub ssid: usize,
    pub timestamp: f64,
    pub frames: [CsiFrame; 2],
    pub los: bool,
    /// Device position when the beacon arrived.
    pub position: Point,
}

/// Receiver channel-hopping plan: every scan cycle visits each channel for
/// one dwell, in ascending channel order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanSchedule {
    pub channels: Vec<u32>,
    pub dwell: f64,
}

impl ScanSchedule {
    pub fn for_site(site: &SiteConfig) -> Self {
        Self { channels: site.scan_channels(), dwell: site.dwell_per_channel }
    }

    pub fn cycle_period(&self) -> f64 {
        self.dwell * self.channels.len() as f64
    }

    /// Listening window of `channel` during cycle `k`.
    pub fn window(&self, k: usize, channel: u32) -> Option<(f64, f64)> {
        let slot = self.channels.iter().position(|&c| c == channel)?;
        let start = k as f64 * self.cycle_period() + slot as f64 * self.dwell;
        Some((start, start + self.dwell))
    }

    /// End of cycle `k`, when its ranging results become available.
    pub fn scan_end(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.cycle_period()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Walk {
    pub truth: WalkTruth,
    pub imu: Vec<ImuSample>,
    pub beacons: Vec<BeaconReception>,
    /// End time of every complete scan cycle.
    pub scan_times: Vec<f64>,
}

impl Walk {
    pub fn duration(&self) -> f64 {
        self.imu.last().map_or(0.0, |s| s.t)
    }
}

/// Piecewise-linear path with arc-length lookup.
struct Polyline {
    points: Vec<Point>,
    cumulative: Vec<f64>,
}

impl Polyline {
    fn new(points: &[Point]) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + distance(w[0], w[1]));
        }
        Self { points: points.to_vec(), cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        let s = s.clamp(0.0, self.length());
        let mut i = self.cumulative.partition_point(|&c| c <= s).saturating_sub(1);
        i = i.min(self.points.len() - 2);
        // skip zero-length segments so the heading is always defined
        while i + 1 < self.points.len() - 1 && self.cumulative[i + 1] - self.cumulative[i] <= 0.0 {
            i += 1;
        }
        while i > 0 && self.cumulative[i + 1] - self.cumulative[i] <= 0.0 {
            i -= 1;
        }
        i
    }

    fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let f = if seg > 0.0 { ((s - self.cumulative[i]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (self.points[i], self.points[i + 1]);
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }

    /// Heading φ with u(φ) = [−sin φ, cos φ] pointing along the segment.
    fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_at(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        (-(b[0] - a[0])).atan2(b[1] - a[1])
    }
}

fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let r = a.rem_euclid(t);
    if r > std::f64::consts::PI {
        r - t
    } else {
        r
    }
}

/// Walks `waypoints` at constant `speed` and records what the device senses.
///
/// The vertical acceleration is a cosine per stride whose amplitude is
/// pre-compensated for the step detector's low-pass filter, so the fourth-root
/// step model returns the simulated stride. Each beacon is evaluated at the
/// device position at its own timestamp.
pub fn generate_walk<R: Rng + ?Sized>(
    site: &SiteConfig,
    waypoints: &[Point],
    speed: f64,
    imu: &ImuParams,
    rng: &mut R,
) -> Result<Walk, SimError> {
    site.validate()?;
    if waypoints.len() < 2 {
        return Err(SimError::Config("a walk needs at least two waypoints".into()));
    }
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(SimError::Config("speed must be positive".into()));
    }
    if !(imu.sample_rate > 2.0 * DEFAULT_CUTOFF_HZ) || !(imu.step_length > 0.0) {
        return Err(SimError::Config("invalid IMU parameters".into()));
    }
    let path = Polyline::new(waypoints);
    let length = path.length();
    if !(length > 0.0) || !length.is_finite() {
        return Err(SimError::DegenerateWalk);
    }

    let steps = (length / imu.step_length).round().max(1.0) as usize;
    let stride = length / steps as f64;
    let walk_time = length / speed;
    let total = imu.lead_in + walk_time + imu.lead_out;
    let reference_offset = match imu.reference_offset {
        Some(v) => v,
        None => rng.random_range(0.0..std::f64::consts::TAU),
    };

    let arc = |t: f64| ((t - imu.lead_in) * speed).clamp(0.0, length);
    let walking = |t: f64| t >= imu.lead_in && t <= imu.lead_in + walk_time;

    let step_freq = speed / stride;
    let gain = zero_phase_gain(step_freq, DEFAULT_CUTOFF_HZ, imu.sample_rate)
        .map_err(|e| SimError::Config(e.to_string()))?;
    let swing = (stride / STEP_COEFFICIENT).powi(4);
    let amplitude = 0.5 * swing / gain;

    let accel_noise = Normal::new(0.0, imu.accel_noise).map_err(|e| SimError::Config(e.to_string()))?;
    let heading_noise = Normal::new(0.0, imu.heading_noise).map_err(|e| SimError::Config(e.to_string()))?;

    let ticks = (total * imu.sample_rate).floor() as usize + 1;
    let mut positions = Vec::with_capacity(ticks);
    let mut headings = Vec::with_capacity(ticks);
    let mut samples = Vec::with_capacity(ticks);
    for i in 0..ticks {
        let t = i as f64 / imu.sample_rate;
        let s = arc(t);
        let heading = path.heading_at(s);
        let mut az = GRAVITY;
        if walking(t) {
            az -= amplitude * (std::f64::consts::TAU * s / stride).cos();
        }
        if imu.accel_noise > 0.0 {
            az += accel_noise.sample(rng);
        }
        let mut sensed = heading - reference_offset;
        if imu.heading_noise > 0.0 {
            sensed += heading_noise.sample(rng);
        }
        positions.push(path.point_at(s));
        headings.push(heading);
        samples.push(ImuSample { t, accel_z: az, heading: wrap_angle(sensed) });
    }
    let step_times = (1..=steps).map(|k| imu.lead_in + k as f64 * stride / speed).collect();

    let position_at = |t: f64| path.point_at(arc(t));
    let (beacons, scan_times) = receive_beacons(site, total, &position_at, rng)?;

    Ok(Walk {
        truth: WalkTruth { positions, headings, reference_offset, step_times, step_length: stride },
        imu: samples,
        beacons,
        scan_times,
    })
}

fn receive_beacons<R: Rng + ?Sized>(
    site: &SiteConfig,
    duration: f64,
    position_at: &dyn Fn(f64) -> Point,
    rng: &mut R,
) -> Result<(Vec<BeaconReception>, Vec<f64>), SimError> {
    let radio = &site.radio;
    let schedule = ScanSchedule::for_site(site);
    let cycles = (duration / schedule.cycle_period()).floor() as usize;
    let n_aps = site.num_aps();
    let phases: Vec<f64> = (0..n_aps * site.ssids_per_ap)
        .map(|_| rng.random_range(0.0..site.beacon_interval))
        .collect();
    let shadow = Normal::new(0.0, radio.shadowing_db).map_err(|e| SimError::Config(e.to_string()))?;
    let rss_noise = Normal::new(0.0, radio.rss_noise_db).map_err(|e| SimError::Config(e.to_string()))?;

    let mut beacons = Vec::new();
    let mut scan_times = Vec::with_capacity(cycles);
    for k in 0..cycles {
        let shadowing: Vec<f64> = (0..n_aps).map(|_| shadow.sample(rng)).collect();
        for &channel in &schedule.channels {
            let (start, end) = schedule.window(k, channel).expect("channel from schedule");
            let mut arrivals = Vec::new();
            for ap in (0..n_aps).filter(|&a| site.channel_assignment[a] == channel) {
                for ssid in 0..site.ssids_per_ap {
                    let phase = phases[ap * site.ssids_per_ap + ssid];
                    let first = ((start - phase) / site.beacon_interval).ceil().max(0.0) as usize;
                    let mut j = first;
                    loop {
                        let t = phase + j as f64 * site.beacon_interval;
                        if t >= end {
                            break;
                        }
                        if t >= start {
                            arrivals.push((t, ap, ssid));
                        }
                        j += 1;
                    }
                }
            }
            arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            for (t, ap, ssid) in arrivals {
                let pos = position_at(t);
                let ap_pos = site.ap_positions[ap];
                if distance(ap_pos, pos) < 1e-6 {
                    continue;
                }
                let link = site.link_budget_dbm(ap, pos) + shadowing[ap];
                if link < radio.sensitivity_dbm || rng.random::<f64>() < radio.beacon_loss {
                    continue;
                }
                let scenario = site.scenario(ap, pos);
                let noise_power = 10f64.powf((radio.noise_floor_dbm - link) / 10.0) * radio.channel.total_power;
                let frame = |antenna: u8, rng: &mut R| -> Result<CsiFrame, SimError> {
                    let cir = synthesize_cir(ap_pos, pos, scenario, &radio.channel, rng)?;
                    let cir = cir.aligned_to(rng.random::<f64>() * radio.sync_jitter)?;
                    let mut f = cir_to_csi(&cir, noise_power, rng)?;
                    f.rss_dbm += link - 10.0 * radio.channel.total_power.log10() + rss_noise.sample(rng);
                    if radio.quantize {
                        quantize(&mut f, radio.quant_full_scale * radio.channel.total_power.sqrt());
                    }
                    f.ap_id = ap;
                    f.antenna_id = antenna;
                    f.timestamp = t;
                    Ok(f)
                };
                let frames = [frame(0, rng)?, frame(1, rng)?];
                beacons.push(BeaconReception {
                    ap_id: ap,
                    ssid,
                    timestamp: t,
                    frames,
                    los: scenario == super::Scenario::Los,
                    position: pos,
                });
            }
        }
        scan_times.push(schedule.scan_end(k));
    }
    Ok((beacons, scan_times))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn site() -> SiteConfig {
        SiteConfig::new(vec![[0.0, 5.0], [10.0, 5.0], [5.0, -5.0]], vec![1, 6, 11], 1)
    }

    #[test]
    fn straight_walk_kinematics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let imu = ImuParams { lead_in: 0.0, lead_out: 0.0, ..ImuParams::clean() };
        let w = generate_walk(&site(), &[[0.0, 0.0], [10.0, 0.0]], 1.0, &imu, &mut rng).unwrap();
        assert!((w.duration() - 10.0).abs() < 1e-9);
        let end = *w.truth.positions.last().unwrap();
        assert!((end[0] - 10.0).abs() < 1e-9 && end[1].abs() < 1e-12);
        assert_eq!(w.imu.len(), w.truth.positions.len());
        assert_eq!(w.truth.headings.len(), w.truth.positions.len());
        // moving east is φ = −π/2 under u(φ) = [−sin φ, cos φ]
        assert!((w.truth.headings[10] + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn scan_cycles_are_under_a_second() {
        let s = ScanSchedule::for_site(&site());
        assert!((s.cycle_period() - 0.9).abs() < 1e-12);
        let (a, b) = s.window(2, 6).unwrap();
        assert!((a - 2.1).abs() < 1e-12 && (b - 2.4).abs() < 1e-12);
        assert!(s.window(0, 3).is_none());
    }

    #[test]
    fn at_most_three_beacons_per_ssid_per_cycle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut site = site();
        site.radio.beacon_loss = 0.0;
        site.radio.sensitivity_dbm = -200.0;
        let w = generate_walk(&site, &[[0.0, 0.0], [20.0, 0.0]], 1.0, &ImuParams::default(), &mut rng).unwrap();
        let period = ScanSchedule::for_site(&site).cycle_period();
        let mut counts = std::collections::HashMap::new();
        for b in &w.beacons {
            let k = (b.timestamp / period).floor() as usize;
            *counts.entry((k, b.ap_id, b.ssid)).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c <= 3));
        assert!(counts.values().any(|&c| c == 3));
        for b in &w.beacons {
            assert!(b.frames.iter().all(|f| f.is_valid() && f.ap_id == b.ap_id));
            assert_eq!(b.frames[0].antenna_id, 0);
            assert_eq!(b.frames[1].antenna_id, 1);
        }
    }

    #[test]
    fn degenerate_polyline_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = generate_walk(&site(), &[[1.0, 1.0], [1.0, 1.0]], 1.0, &ImuParams::default(), &mut rng);
        assert!(matches!(r, Err(SimError::DegenerateWalk)));
    }

    #[test]
    fn same_seed_same_walk() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            generate_walk(&site(), &[[0.0, 0.0], [6.0, 0.0], [6.0, 4.0]], 1.2, &ImuParams::default(), &mut rng)
                .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn heading_stream_is_offset_by_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let imu = ImuParams { reference_offset: Some(0.7), ..ImuParams::clean() };
        let w = generate_walk(&site(), &[[0.0, 0.0], [0.0, 10.0]], 1.0, &imu, &mut rng).unwrap();
        for (s, h) in w.imu.iter().zip(&w.truth.headings) {
            assert!((wrap_angle(h - 0.7 - s.heading)).abs() < 1e-12);
        }
    }
}
