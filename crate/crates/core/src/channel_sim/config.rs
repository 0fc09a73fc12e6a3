//! Flat key-value run configuration and walk planning.
//!
//! A run file is TOML without tables. Every key is optional; an empty file
//! describes the built-in 40 m × 24 m office: eight rooms on both sides of a
//! corridor, twelve APs on three channels and a walkable navigation graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelParams, ImuParams, Point, RadioParams, SimError, SiteConfig};

/// Everything `simulate` needs: site, radio, gait and which walks to emit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub ap_positions: Vec<Point>,
    pub channels: Vec<u32>,
    pub tx_offsets_db: Vec<f64>,
    /// Wall segments as `[x1, y1, x2, y2]`.
    pub walls: Vec<[f64; 4]>,
    pub beacon_interval: f64,
    pub dwell_per_channel: f64,
    pub ssids_per_ap: usize,

    pub rss_d0_dbm: f64,
    pub path_loss_exponent: f64,
    pub wall_loss_db: f64,
    pub shadowing_db: f64,
    pub rss_noise_db: f64,
    pub noise_floor_dbm: f64,
    pub sensitivity_dbm: f64,
    pub beacon_loss: f64,
    pub sync_jitter: f64,
    pub quantize: bool,
    pub rms_delay_spread: f64,
    pub los_rms_delay_spread: f64,
    pub los_power_fraction: f64,
    pub tap_count: usize,
    pub tap_spacing: f64,

    /// Walkable graph: nodes as `[x, y, jitter]`; a positive jitter marks a
    /// room where the walker wanders inside a square of that half-width.
    pub nav_nodes: Vec<[f64; 3]>,
    pub nav_edges: Vec<[usize; 2]>,

    pub speed: f64,
    pub step_length: f64,
    pub accel_noise: f64,
    pub heading_noise: f64,

    /// Labeled walk for baseline calibration; generated from the graph when empty.
    pub calibration_path: Vec<Point>,
    pub calibration: bool,
    /// Length of the labeled test walk (m); 0 disables it.
    pub test_length: f64,
    pub test_path: Vec<Point>,
    /// Duration of the unlabeled training walk (s); 0 disables it.
    pub train_duration: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let radio = RadioParams::default();
        let ch = ChannelParams::default();
        let imu = ImuParams::default();
        let (nav_nodes, nav_edges) = office_graph();
        Self {
            seed: 1,
            ap_positions: office_aps(),
            channels: (0..12).map(|i| [1, 6, 11][i % 3]).collect(),
            tx_offsets_db: vec![3.0, -4.0, 1.0, -2.0, 5.0, -5.0, 0.0, 2.0, -3.0, 4.0, -1.0, -6.0],
            walls: office_walls(),
            beacon_interval: 0.1,
            dwell_per_channel: 0.3,
            ssids_per_ap: 2,
            rss_d0_dbm: radio.rss_d0_dbm,
            path_loss_exponent: radio.path_loss_exponent,
            wall_loss_db: radio.wall_loss_db,
            shadowing_db: radio.shadowing_db,
            rss_noise_db: radio.rss_noise_db,
            noise_floor_dbm: radio.noise_floor_dbm,
            sensitivity_dbm: radio.sensitivity_dbm,
            beacon_loss: radio.beacon_loss,
            sync_jitter: radio.sync_jitter,
            quantize: radio.quantize,
            rms_delay_spread: ch.rms_delay_spread,
            los_rms_delay_spread: ch.los_rms_delay_spread,
            los_power_fraction: ch.los_power_fraction,
            tap_count: ch.tap_count,
            tap_spacing: ch.tap_spacing,
            nav_nodes,
            nav_edges,
            speed: 1.0,
            step_length: imu.step_length,
            accel_noise: imu.accel_noise,
            heading_noise: imu.heading_noise,
            calibration_path: Vec::new(),
            calibration: true,
            test_length: 150.0,
            test_path: Vec::new(),
            train_duration: 1850.0,
        }
    }
}

fn office_aps() -> Vec<Point> {
    let mut aps = Vec::new();
    for j in 0..4 {
        let x = 10.0 * j as f64;
        aps.push([x + 3.0, 3.0]);
        aps.push([x + 7.0, 21.0]);
    }
    for x in [2.0, 14.0, 26.0, 38.0] {
        aps.push([x, 12.0]);
    }
    aps
}

fn office_walls() -> Vec<[f64; 4]> {
    let mut walls = Vec::new();
    for y in [10.0, 14.0] {
        // doors at x = 10j + 4 … 10j + 6
        let mut x0 = 0.0;
        for j in 0..4 {
            let door = 10.0 * j as f64 + 4.0;
            walls.push([x0, y, door, y]);
            x0 = door + 2.0;
        }
        walls.push([x0, y, 40.0, y]);
    }
    for x in [10.0, 20.0, 30.0] {
        walls.push([x, 0.0, x, 10.0]);
        walls.push([x, 14.0, x, 24.0]);
    }
    walls
}

fn office_graph() -> (Vec<[f64; 3]>, Vec<[usize; 2]>) {
    let mut nodes = vec![[1.0, 12.0, 0.0]];
    let mut edges = Vec::new();
    let mut prev = 0;
    for j in 0..4 {
        let x = 10.0 * j as f64 + 5.0;
        let c = nodes.len();
        nodes.push([x, 12.0, 0.0]);
        edges.push([prev, c]);
        prev = c;
        for (door_y, room_y) in [(10.0, 5.0), (14.0, 19.0)] {
            let d = nodes.len();
            nodes.push([x, door_y, 0.0]);
            nodes.push([x, room_y, 3.0]);
            edges.push([c, d]);
            edges.push([d, d + 1]);
        }
    }
    nodes.push([39.0, 12.0, 0.0]);
    edges.push([prev, nodes.len() - 1]);
    (nodes, edges)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.site().validate()?;
        for e in &cfg.nav_edges {
            if e[0] >= cfg.nav_nodes.len() || e[1] >= cfg.nav_nodes.len() {
                return Err(SimError::Config(format!("nav edge {e:?} references a missing node")));
            }
        }
        if !(cfg.speed > 0.0) || !(cfg.step_length > 0.0) {
            return Err(SimError::Config("speed and step_length must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn site(&self) -> SiteConfig {
        SiteConfig {
            ap_positions: self.ap_positions.clone(),
            channel_assignment: self.channels.clone(),
            beacon_interval: self.beacon_interval,
            dwell_per_channel: self.dwell_per_channel,
            rng_seed: self.seed,
            ssids_per_ap: self.ssids_per_ap,
            tx_offsets_db: self.tx_offsets_db.clone(),
            walls: self.walls.iter().map(|w| [[w[0], w[1]], [w[2], w[3]]]).collect(),
            radio: RadioParams {
                rss_d0_dbm: self.rss_d0_dbm,
                path_loss_exponent: self.path_loss_exponent,
                wall_loss_db: self.wall_loss_db,
                shadowing_db: self.shadowing_db,
                rss_noise_db: self.rss_noise_db,
                noise_floor_dbm: self.noise_floor_dbm,
                sensitivity_dbm: self.sensitivity_dbm,
                beacon_loss: self.beacon_loss,
                sync_jitter: self.sync_jitter,
                quantize: self.quantize,
                channel: ChannelParams {
                    rms_delay_spread: self.rms_delay_spread,
                    los_rms_delay_spread: self.los_rms_delay_spread,
                    los_power_fraction: self.los_power_fraction,
                    tap_count: self.tap_count,
                    tap_spacing: self.tap_spacing,
                    ..ChannelParams::default()
                },
                ..RadioParams::default()
            },
        }
    }

    pub fn imu(&self) -> ImuParams {
        ImuParams {
            step_length: self.step_length,
            accel_noise: self.accel_noise,
            heading_noise: self.heading_noise,
            ..ImuParams::default()
        }
    }

    fn nav(&self) -> Option<NavGraph<'_>> {
        (!self.nav_nodes.is_empty()).then(|| NavGraph::new(&self.nav_nodes, &self.nav_edges))
    }

    /// Random route of roughly `length` meters.
    pub fn random_route<R: Rng + ?Sized>(&self, length: f64, rng: &mut R) -> Vec<Point> {
        match self.nav() {
            Some(g) if g.has_edges() => g.random_route(length, rng),
            _ => random_waypoints(&self.ap_positions, length, rng),
        }
    }

    /// Calibration walk: the configured path, else a tour of the whole graph.
    pub fn calibration_route<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point> {
        if !self.calibration_path.is_empty() {
            return self.calibration_path.clone();
        }
        match self.nav() {
            Some(g) if g.has_edges() => g.tour(),
            _ => random_waypoints(&self.ap_positions, 300.0, rng),
        }
    }

    pub fn test_route<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Point> {
        if !self.test_path.is_empty() {
            return self.test_path.clone();
        }
        self.random_route(self.test_length, rng)
    }
}

fn random_waypoints<R: Rng + ?Sized>(aps: &[Point], length: f64, rng: &mut R) -> Vec<Point> {
    let lo = [0, 1].map(|i| aps.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min));
    let hi = [0, 1].map(|i| aps.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max));
    let draw = |rng: &mut R| {
        [0, 1].map(|i| if hi[i] > lo[i] { rng.random_range(lo[i]..hi[i]) } else { lo[i] + rng.random_range(-5.0..5.0) })
    };
    let mut pts = vec![draw(rng)];
    let mut total = 0.0;
    while total < length {
        let p = draw(rng);
        total += super::distance(*pts.last().unwrap(), p);
        pts.push(p);
    }
    pts
}

struct NavGraph<'a> {
    nodes: &'a [[f64; 3]],
    adj: Vec<Vec<usize>>,
}

impl<'a> NavGraph<'a> {
    fn new(nodes: &'a [[f64; 3]], edges: &[[usize; 2]]) -> Self {
        let mut adj = vec![Vec::new(); nodes.len()];
        for &[a, b] in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        Self { nodes, adj }
    }

    fn has_edges(&self) -> bool {
        self.adj.iter().any(|a| !a.is_empty())
    }

    fn point(&self, i: usize) -> Point {
        [self.nodes[i][0], self.nodes[i][1]]
    }

    /// Node position, or for rooms one to three random spots inside.
    fn visit<R: Rng + ?Sized>(&self, i: usize, rng: &mut R, out: &mut Vec<Point>) {
        let [x, y, r] = self.nodes[i];
        if r > 0.0 {
            for _ in 0..rng.random_range(1..=3) {
                out.push([x + rng.random_range(-r..r), y + rng.random_range(-r..r)]);
            }
        } else {
            out.push([x, y]);
        }
    }

    fn random_route<R: Rng + ?Sized>(&self, length: f64, rng: &mut R) -> Vec<Point> {
        let start = loop {
            let i = rng.random_range(0..self.nodes.len());
            if !self.adj[i].is_empty() {
                break i;
            }
        };
        let mut pts = Vec::new();
        self.visit(start, rng, &mut pts);
        let (mut prev, mut cur) = (usize::MAX, start);
        let mut total = 0.0;
        while total < length {
            let choices: Vec<usize> = self.adj[cur].iter().copied().filter(|&n| n != prev).collect();
            let next = if choices.is_empty() { prev } else { choices[rng.random_range(0..choices.len())] };
            let before = pts.len();
            self.visit(next, rng, &mut pts);
            for k in before..pts.len() {
                total += super::distance(pts[k - 1], pts[k]);
            }
            prev = cur;
            cur = next;
        }
        pts
    }

    /// Depth-first tour from node 0 that walks every edge of the search tree
    /// twice and loops around the inside of every room.
    fn tour(&self) -> Vec<Point> {
        let mut seen = vec![false; self.nodes.len()];
        let mut pts = Vec::new();
        self.dfs(0, &mut seen, &mut pts);
        pts
    }

    fn dfs(&self, i: usize, seen: &mut [bool], pts: &mut Vec<Point>) {
        seen[i] = true;
        let [x, y, r] = self.nodes[i];
        pts.push([x, y]);
        if r > 0.0 {
            let h = 0.8 * r;
            pts.extend([[x - h, y - h], [x + h, y - h], [x + h, y + h], [x - h, y + h], [x - h, y - h], [x, y]]);
        }
        for &n in &self.adj[i] {
            if !seen[n] {
                self.dfs(n, seen, pts);
                pts.push(self.point(i));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_file_is_the_default_office() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let site = cfg.site();
        assert_eq!(site.num_aps(), 12);
        assert_eq!(site.scan_channels(), vec![1, 6, 11]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("beacon_interval = -1.0").is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::from_toml("seed = 7\nap_positions = [[0.0, 0.0], [5.0, 0.0]]\nchannels = [1, 1]\ntx_offsets_db = []\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.site().num_aps(), 2);
    }

    #[test]
    fn office_routes_avoid_walls() {
        let cfg = RunConfig::default();
        let site = cfg.site();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for route in [cfg.random_route(400.0, &mut rng), cfg.calibration_route(&mut rng)] {
            for w in route.windows(2) {
                assert_eq!(site.walls_between(w[0], w[1]), 0, "{:?} -> {:?}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn calibration_tour_visits_every_room() {
        let cfg = RunConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let route = cfg.calibration_route(&mut rng);
        for n in cfg.nav_nodes.iter().filter(|n| n[2] > 0.0) {
            assert!(route.iter().any(|p| (p[0] - n[0]).abs() < 1e-9 && (p[1] - n[1]).abs() < 1e-9));
        }
    }
}
