//! Synthetic indoor site: AP layout, walls, walks, multipath channels,
//! beacon CSI/RSS and the IMU streams a handheld device would record.
//!
//! Everything is a pure function of its inputs and an explicit RNG handle,
//! so a fixed seed reproduces a run bit for bit.

mod cir;
pub mod config;
mod csi;
pub mod records;
mod walk;

pub use cir::{synthesize_cir, ChannelParams, MultipathProfile, Scenario, Tap};
pub use csi::{cir_to_csi, quantize, CsiFrame, QUANT_MAX, QUANT_MIN};
pub use walk::{
    generate_walk, BeaconReception, ImuParams, ImuSample, ScanSchedule, Walk, WalkTruth,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Propagation speed used for tap delays (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Legacy 20 MHz OFDM sub-carrier spacing (Hz).
pub const SUBCARRIER_SPACING: f64 = 312.5e3;
/// Pilot and data sub-carriers reported per frame.
pub const NUM_SUBCARRIERS: usize = 52;
/// DFT size of the legacy OFDM symbol.
pub const DFT_SIZE: usize = 64;

/// A point on the floor plane, meters.
pub type Point = [f64; 2];

/// Sub-carrier index for storage slot `i`: −26…−1 then 1…26.
pub fn subcarrier_index(i: usize) -> i32 {
    assert!(i < NUM_SUBCARRIERS);
    if i < 26 {
        i as i32 - 26
    } else {
        i as i32 - 25
    }
}

pub fn subcarrier_indices() -> [i32; NUM_SUBCARRIERS] {
    std::array::from_fn(subcarrier_index)
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("transmitter and receiver positions coincide")]
    CoincidentPositions,
    #[error("invalid multipath profile: {0}")]
    Profile(String),
    #[error("noise power must be non-negative, got {0}")]
    NegativeNoise(f64),
    #[error("walk polyline has zero length")]
    DegenerateWalk,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Radio environment shared by all APs of a site. Defaults are synthetic and
/// not calibrated against any real building.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioParams {
    /// Received power at 1 m in free space for a 0 dB transmit offset (dBm).
    pub rss_d0_dbm: f64,
    pub path_loss_exponent: f64,
    /// Extra attenuation per wall crossed by the direct path (dB).
    pub wall_loss_db: f64,
    /// Log-normal shadowing drawn per AP and scan cycle (dB std).
    pub shadowing_db: f64,
    /// Per-frame RSS reporting noise (dB std).
    pub rss_noise_db: f64,
    /// Receiver noise floor (dBm); sets the CSI noise relative to the link.
    pub noise_floor_dbm: f64,
    /// Frames whose RSS falls below this level are not received (dBm).
    pub sensitivity_dbm: f64,
    /// Probability that a beacon above sensitivity is still missed.
    pub beacon_loss: f64,
    /// Maximum receiver timing error applied to the first arrival (s).
    pub sync_jitter: f64,
    /// Round CSI to the 10-bit reporting grid.
    pub quantize: bool,
    /// Full-scale amplitude of the 10-bit grid (unit-power CSI).
    pub quant_full_scale: f64,
    pub channel: ChannelParams,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            rss_d0_dbm: -32.0,
            path_loss_exponent: 2.6,
            wall_loss_db: 7.0,
            shadowing_db: 2.0,
            rss_noise_db: 1.0,
            noise_floor_dbm: -95.0,
            sensitivity_dbm: -88.0,
            beacon_loss: 0.05,
            sync_jitter: 5e-9,
            quantize: false,
            quant_full_scale: 4.0,
            channel: ChannelParams::default(),
        }
    }
}

/// Static description of a site and its beacon schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub ap_positions: Vec<Point>,
    /// Wi-Fi channel number per AP.
    pub channel_assignment: Vec<u32>,
    /// Seconds between beacons of one SSID.
    pub beacon_interval: f64,
    /// Seconds the receiver listens on each channel per scan cycle.
    pub dwell_per_channel: f64,
    pub rng_seed: u64,
    /// SSIDs broadcast by every AP, each on its own beacon timer.
    pub ssids_per_ap: usize,
    /// Transmit power offset per AP (dB); empty means all zero.
    pub tx_offsets_db: Vec<f64>,
    /// Wall segments that turn a crossing direct path into NLOS.
    pub walls: Vec<[Point; 2]>,
    pub radio: RadioParams,
}

impl SiteConfig {
    /// A site with default radio parameters and no walls.
    pub fn new(ap_positions: Vec<Point>, channel_assignment: Vec<u32>, rng_seed: u64) -> Self {
        Self {
            ap_positions,
            channel_assignment,
            beacon_interval: 0.1,
            dwell_per_channel: 0.3,
            rng_seed,
            ssids_per_ap: 2,
            tx_offsets_db: Vec::new(),
            walls: Vec::new(),
            radio: RadioParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.ap_positions.is_empty() {
            return bad("ap_positions must not be empty");
        }
        if self.ap_positions.iter().flatten().any(|v| !v.is_finite()) {
            return bad("ap_positions must be finite");
        }
        if self.channel_assignment.len() != self.ap_positions.len() {
            return bad("channel_assignment needs one entry per AP");
        }
        if !(self.beacon_interval > 0.0) || !self.beacon_interval.is_finite() {
            return bad("beacon_interval must be positive");
        }
        if !(self.dwell_per_channel > 0.0) || !self.dwell_per_channel.is_finite() {
            return bad("dwell_per_channel must be positive");
        }
        if self.ssids_per_ap == 0 {
            return bad("ssids_per_ap must be at least 1");
        }
        if !self.tx_offsets_db.is_empty() && self.tx_offsets_db.len() != self.ap_positions.len() {
            return bad("tx_offsets_db needs one entry per AP or none");
        }
        if self.tx_offsets_db.iter().any(|v| !v.is_finite()) {
            return bad("tx_offsets_db must be finite");
        }
        if self.walls.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return bad("walls must be finite");
        }
        let r = &self.radio;
        if !(r.path_loss_exponent > 0.0) {
            return bad("path_loss_exponent must be positive");
        }
        if !(0.0..1.0).contains(&r.beacon_loss) {
            return bad("beacon_loss must lie in [0, 1)");
        }
        if r.shadowing_db < 0.0 || r.rss_noise_db < 0.0 || r.sync_jitter < 0.0 {
            return bad("noise levels must be non-negative");
        }
        r.channel.validate()
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn tx_offset(&self, ap: usize) -> f64 {
        self.tx_offsets_db.get(ap).copied().unwrap_or(0.0)
    }

    /// Distinct channels in scan order (ascending channel number).
    pub fn scan_channels(&self) -> Vec<u32> {
        let mut ch = self.channel_assignment.clone();
        ch.sort_unstable();
        ch.dedup();
        ch
    }

    /// Number of walls crossed by the segment between `a` and `b`.
    pub fn walls_between(&self, a: Point, b: Point) -> usize {
        self.walls.iter().filter(|w| segments_cross(a, b, w[0], w[1])).count()
    }

    pub fn scenario(&self, ap: usize, pos: Point) -> Scenario {
        if self.walls_between(self.ap_positions[ap], pos) == 0 {
            Scenario::Los
        } else {
            Scenario::Nlos
        }
    }

    /// Mean received power (dBm) from `ap` at `pos`, before shadowing.
    pub fn link_budget_dbm(&self, ap: usize, pos: Point) -> f64 {
        let r = &self.radio;
        let d = distance(self.ap_positions[ap], pos).max(0.1);
        let walls = self.walls_between(self.ap_positions[ap], pos) as f64;
        r.rss_d0_dbm + self.tx_offset(ap) - 10.0 * r.path_loss_exponent * d.log10()
            - walls * r.wall_loss_db
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Proper intersection test; touching endpoints do not count.
fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}
