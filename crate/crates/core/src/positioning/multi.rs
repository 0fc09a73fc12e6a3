//! Bank of three-state filters over (x, y, φ_ref), one per candidate
//! reference direction, fed by PDR displacements between epochs.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};

use super::ekf::{check_psd, spd_inverse, usable_rows, EkfConfig, EpochMeasurement, Innovation};
use super::{centroid, PositioningError};
use crate::channel_sim::Point;

/// Counter-clockwise rotation by `phi`.
pub fn rotation(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// How the best hypothesis is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Latest squared innovation norm.
    Instantaneous,
    /// Sum of squared innovation norms over the sliding window.
    Accumulated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MhConfig {
    pub hypotheses: usize,
    pub s_xy: f64,
    pub s_phi: f64,
    /// Sliding window of the accumulated innovation (s).
    pub window: f64,
    /// Time after which only the best hypothesis is kept (s).
    pub warmup: f64,
    pub selection: Selection,
    /// Position process noise std as a fraction of the PDR displacement.
    pub step_noise: f64,
    pub ekf: EkfConfig,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            hypotheses: 90,
            s_xy: 10.0,
            s_phi: std::f64::consts::PI,
            window: 10.0,
            warmup: 10.0,
            selection: Selection::Accumulated,
            step_noise: 0.1,
            ekf: EkfConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisState {
    /// `[x, y, φ_ref]`, with φ_ref kept in [0, 2π).
    pub zeta: Vector3<f64>,
    pub p: Matrix3<f64>,
    window: VecDeque<(f64, f64)>,
    pub accumulated_innovation: f64,
    pub last_innovation: f64,
}

impl HypothesisState {
    pub fn position(&self) -> Point {
        [self.zeta[0], self.zeta[1]]
    }

    pub fn phi_ref(&self) -> f64 {
        self.zeta[2]
    }

    fn score(&self, sel: Selection) -> f64 {
        match sel {
            Selection::Instantaneous => self.last_innovation,
            Selection::Accumulated => self.accumulated_innovation,
        }
    }
}

/// M hypotheses sharing the AP centroid, with φ_ref,m = 2πm/M for m = 1..M.
pub fn mh_init(aps: &[Point], m: usize, s_x: f64, s_y: f64, s_phi: f64) -> Vec<HypothesisState> {
    let c = centroid(aps);
    (1..=m)
        .map(|k| HypothesisState {
            zeta: Vector3::new(c[0], c[1], TAU * k as f64 / m as f64),
            p: Matrix3::from_diagonal(&Vector3::new(s_x * s_x, s_y * s_y, s_phi * s_phi)),
            window: VecDeque::new(),
            accumulated_innovation: 0.0,
            last_innovation: 0.0,
        })
        .collect()
}

/// Advances by the rotated PDR increment; `q` is the position process variance.
pub fn mh_predict(h: &HypothesisState, dp: Point, q: f64) -> HypothesisState {
    let phi = h.zeta[2];
    let dp = Vector2::new(dp[0], dp[1]);
    let step = rotation(phi) * dp;
    let dstep = rotation(phi + FRAC_PI_2) * dp;
    let mut f = Matrix3::identity();
    f[(0, 2)] = dstep[0];
    f[(1, 2)] = dstep[1];
    let mut p = f * h.p * f.transpose();
    p[(0, 0)] += q;
    p[(1, 1)] += q;
    let mut next = h.clone();
    next.zeta = Vector3::new(h.zeta[0] + step[0], h.zeta[1] + step[1], phi);
    next.p = (p + p.transpose()) * 0.5;
    next
}

fn wrap(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r >= TAU { 0.0 } else { r }
}

/// Three-state update with H̃ = [∂h/∂z, 0]; records the innovation at time `t`.
pub fn mh_update(
    h: &HypothesisState,
    meas: &EpochMeasurement,
    t: f64,
    cfg: &MhConfig,
) -> Result<(HypothesisState, Innovation), PositioningError> {
    meas.validate()?;
    let rows = usable_rows(h.position(), &meas.aps, cfg.ekf.guard);
    let mut next = h.clone();
    if rows.is_empty() {
        return Ok((next, Innovation::default()));
    }
    let n = rows.len();
    let mut hm = DMatrix::zeros(n, 3);
    let mut e = DVector::zeros(n);
    let mut lambda = DMatrix::zeros(n, n);
    for (i, &r) in rows.iter().enumerate() {
        let diff = Vector2::new(h.zeta[0] - meas.aps[r][0], h.zeta[1] - meas.aps[r][1]);
        let range = diff.norm();
        hm[(i, 0)] = diff[0] / range;
        hm[(i, 1)] = diff[1] / range;
        e[i] = meas.d[r] - range;
        lambda[(i, i)] = meas.s[r] * meas.s[r];
    }
    let p = DMatrix::from_column_slice(3, 3, h.p.as_slice());
    let s = &hm * &p * hm.transpose() + &lambda;
    let g = &p * hm.transpose() * spd_inverse(&s)?;
    let dz = &g * &e;
    let a = DMatrix::identity(3, 3) - &g * &hm;
    let mut p_new = if cfg.ekf.joseph {
        &a * &p * a.transpose() + &g * &lambda * g.transpose()
    } else {
        &a * &p
    };
    p_new = (&p_new + p_new.transpose()) * 0.5;
    check_psd(&p_new)?;

    next.zeta = Vector3::new(h.zeta[0] + dz[0], h.zeta[1] + dz[1], wrap(h.zeta[2] + dz[2]));
    next.p = Matrix3::from_iterator(p_new.iter().copied());
    let inn = Innovation { rows, e: e.iter().copied().collect() };
    let sq = inn.norm_sq();
    next.last_innovation = sq;
    next.window.push_back((t, sq));
    while next.window.front().is_some_and(|&(ts, _)| ts <= t - cfg.window) {
        next.window.pop_front();
    }
    next.accumulated_innovation = next.window.iter().map(|w| w.1).sum();
    Ok((next, inn))
}

/// Runs the whole bank, pruning to the best hypothesis after the warm-up.
#[derive(Clone, Debug)]
pub struct MultiHypothesisFilter {
    pub cfg: MhConfig,
    pub hypotheses: Vec<HypothesisState>,
    /// Original index of each surviving hypothesis.
    pub ids: Vec<usize>,
    start: f64,
    pruned: bool,
}

impl MultiHypothesisFilter {
    pub fn new(aps: &[Point], t0: f64, cfg: MhConfig) -> Self {
        let hypotheses = mh_init(aps, cfg.hypotheses, cfg.s_xy, cfg.s_xy, cfg.s_phi);
        let ids = (0..hypotheses.len()).collect();
        Self { cfg, hypotheses, ids, start: t0, pruned: false }
    }

    /// Index (into `hypotheses`) of the current best candidate; ties go to
    /// the lower original index.
    pub fn best(&self) -> usize {
        let sel = self.cfg.selection;
        (0..self.hypotheses.len())
            .min_by(|&a, &b| {
                self.hypotheses[a]
                    .score(sel)
                    .total_cmp(&self.hypotheses[b].score(sel))
                    .then(self.ids[a].cmp(&self.ids[b]))
            })
            .expect("at least one hypothesis")
    }

    pub fn is_pruned(&self) -> bool {
        self.pruned
    }

    /// Predict with `dp`, update with `meas` if present, then select.
    /// Returns the original index of the best hypothesis.
    pub fn step(&mut self, t: f64, dp: Point, meas: Option<&EpochMeasurement>) -> Result<usize, PositioningError> {
        let q = (self.cfg.step_noise * dp[0].hypot(dp[1])).powi(2);
        for h in &mut self.hypotheses {
            let mut next = mh_predict(h, dp, q);
            if let Some(m) = meas {
                next = mh_update(&next, m, t, &self.cfg)?.0;
            }
            *h = next;
        }
        let best = self.best();
        if !self.pruned && t - self.start >= self.cfg.warmup {
            self.hypotheses = vec![self.hypotheses[best].clone()];
            self.ids = vec![self.ids[best]];
            self.pruned = true;
            return Ok(self.ids[0]);
        }
        Ok(self.ids[best])
    }

    pub fn best_state(&self) -> &HypothesisState {
        &self.hypotheses[self.best()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_directions() {
        let h = mh_init(&[[0.0, 0.0], [2.0, 2.0]], 4, 10.0, 10.0, 3.0);
        let phis: Vec<f64> = h.iter().map(|h| h.phi_ref()).collect();
        let want = [FRAC_PI_2, std::f64::consts::PI, 3.0 * FRAC_PI_2, TAU];
        for (a, b) in phis.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(h.iter().all(|h| h.position() == [1.0, 1.0]));
        assert_eq!(h[0].p, Matrix3::from_diagonal(&Vector3::new(100.0, 100.0, 9.0)));
    }

    #[test]
    fn predict_rotates_the_step() {
        let mut h = mh_init(&[[0.0, 0.0]], 1, 1.0, 1.0, 1.0).remove(0);
        let p0 = h.p;
        let same = mh_predict(&h, [0.0, 0.0], 0.0);
        assert_eq!(same.zeta, h.zeta);
        assert!((same.p - p0).abs().max() < 1e-15);
        h.zeta[2] = 0.0;
        let moved = mh_predict(&h, [0.0, 1.0], 0.0);
        assert!((moved.zeta[0]).abs() < 1e-15 && (moved.zeta[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_column_matches_finite_difference() {
        let dp = Vector2::new(0.3, -0.7);
        let phi = 0.9;
        let analytic = rotation(phi + FRAC_PI_2) * dp;
        let h = 1e-6;
        let numeric = (rotation(phi + h) * dp - rotation(phi - h) * dp) / (2.0 * h);
        assert!((analytic - numeric).norm() < 1e-9);
    }

    #[test]
    fn single_hypothesis_is_best() {
        let mut f = MultiHypothesisFilter::new(&[[0.0, 0.0], [5.0, 0.0]], 0.0, MhConfig { hypotheses: 1, ..Default::default() });
        let m = EpochMeasurement { aps: vec![[0.0, 0.0], [5.0, 0.0]], d: vec![3.0, 3.0], s: vec![1.0, 1.0] };
        assert_eq!(f.step(1.0, [0.0, 0.5], Some(&m)).unwrap(), 0);
    }

    #[test]
    fn window_drops_old_innovations() {
        let cfg = MhConfig { window: 2.0, ..Default::default() };
        let m = EpochMeasurement { aps: vec![[0.0, 0.0]], d: vec![3.0], s: vec![1.0] };
        let mut h = mh_init(&[[1.0, 1.0]], 1, 1.0, 1.0, 0.1).remove(0);
        for t in [1.0, 2.0, 3.0, 4.0] {
            h = mh_update(&h, &m, t, &cfg).unwrap().0;
        }
        assert_eq!(h.window.len(), 2);
        let sum: f64 = h.window.iter().map(|w| w.1).sum();
        assert_eq!(h.accumulated_innovation, sum);
    }
}
