//! Two-state range EKF, in plain linear algebra and recorded on a tape.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::{centroid, PositioningError};
use crate::channel_sim::Point;
use crate::nn_core::{NnError, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkfConfig {
    /// Initial position standard deviation on each axis (m).
    pub s_xy: f64,
    /// Assumed walking speed for the process noise (m/s).
    pub speed: f64,
    /// APs closer than this to the estimate are left out of an update (m).
    pub guard: f64,
    pub joseph: bool,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self { s_xy: 10.0, speed: 1.0, guard: 0.1, joseph: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkfState {
    pub z: Vector2<f64>,
    pub p: Matrix2<f64>,
}

impl EkfState {
    pub fn position(&self) -> Point {
        [self.z[0], self.z[1]]
    }
}

/// Ranges to the APs chosen for one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMeasurement {
    pub aps: Vec<Point>,
    pub d: Vec<f64>,
    pub s: Vec<f64>,
}

impl EpochMeasurement {
    pub fn validate(&self) -> Result<(), PositioningError> {
        let n = self.aps.len();
        if n == 0 || self.d.len() != n || self.s.len() != n {
            return Err(PositioningError::Measurement(format!(
                "{} APs, {} distances, {} deviations",
                n,
                self.d.len(),
                self.s.len()
            )));
        }
        if !self.d.iter().chain(&self.s).all(|v| *v > 0.0 && v.is_finite()) {
            return Err(PositioningError::Measurement("distances and deviations must be positive".into()));
        }
        Ok(())
    }
}

/// Residuals d − h(ẑ) of the rows that took part in an update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Innovation {
    pub rows: Vec<usize>,
    pub e: Vec<f64>,
}

impl Innovation {
    pub fn norm_sq(&self) -> f64 {
        self.e.iter().map(|v| v * v).sum()
    }
}

pub fn ekf_init(aps: &[Point], s_x: f64, s_y: f64) -> EkfState {
    let c = centroid(aps);
    EkfState { z: Vector2::new(c[0], c[1]), p: Matrix2::new(s_x * s_x, 0.0, 0.0, s_y * s_y) }
}

/// Q = ½(vΔt)² per axis.
pub fn process_noise(speed: f64, dt: f64) -> f64 {
    0.5 * (speed * dt).powi(2)
}

pub fn ekf_predict(state: &EkfState, speed: f64, dt: f64) -> EkfState {
    let q = process_noise(speed, dt);
    EkfState { z: state.z, p: state.p + Matrix2::identity() * q }
}

/// Rows whose AP is at least `guard` away from `z`.
pub(crate) fn usable_rows(z: [f64; 2], aps: &[Point], guard: f64) -> Vec<usize> {
    (0..aps.len()).filter(|&n| (z[0] - aps[n][0]).hypot(z[1] - aps[n][1]) >= guard).collect()
}

/// Inverse of a symmetric positive-definite matrix, or its condition estimate.
pub(crate) fn spd_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>, PositioningError> {
    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v.abs())));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < 1e14) {
        return Err(PositioningError::Singular { condition });
    }
    s.clone().try_inverse().ok_or(PositioningError::Singular { condition })
}

pub(crate) fn check_psd(p: &DMatrix<f64>) -> Result<(), PositioningError> {
    let asym = (p - p.transpose()).abs().max();
    let min = p.clone().symmetric_eigenvalues().min();
    if asym > 1e-9 * p.abs().max().max(1.0) || min < -1e-9 {
        return Err(PositioningError::Covariance(min));
    }
    Ok(())
}

/// One measurement update. APs within the guard distance are skipped; if
/// none remain the state is returned unchanged.
pub fn ekf_update(
    state: &EkfState,
    meas: &EpochMeasurement,
    cfg: &EkfConfig,
) -> Result<(EkfState, Innovation), PositioningError> {
    meas.validate()?;
    let rows = usable_rows(state.position(), &meas.aps, cfg.guard);
    if rows.is_empty() {
        return Ok((*state, Innovation::default()));
    }
    let n = rows.len();
    let mut h = DMatrix::zeros(n, 2);
    let mut e = DVector::zeros(n);
    let mut lambda = DMatrix::zeros(n, n);
    for (i, &r) in rows.iter().enumerate() {
        let diff = state.z - Vector2::new(meas.aps[r][0], meas.aps[r][1]);
        let range = diff.norm();
        h[(i, 0)] = diff[0] / range;
        h[(i, 1)] = diff[1] / range;
        e[i] = meas.d[r] - range;
        lambda[(i, i)] = meas.s[r] * meas.s[r];
    }
    let p = DMatrix::from_column_slice(2, 2, state.p.as_slice());
    let s = &h * &p * h.transpose() + &lambda;
    let s_inv = spd_inverse(&s)?;
    let g = &p * h.transpose() * s_inv;
    let dz = &g * &e;
    let a = DMatrix::identity(2, 2) - &g * &h;
    let mut p_new = if cfg.joseph {
        &a * &p * a.transpose() + &g * &lambda * g.transpose()
    } else {
        &a * &p
    };
    p_new = (&p_new + p_new.transpose()) * 0.5;
    check_psd(&p_new)?;
    let next = EkfState {
        z: state.z + Vector2::new(dz[0], dz[1]),
        p: Matrix2::new(p_new[(0, 0)], p_new[(0, 1)], p_new[(1, 0)], p_new[(1, 1)]),
    };
    Ok((next, Innovation { rows, e: e.iter().copied().collect() }))
}

/// Filter state recorded on a tape: `z` is `[2, 1]`, `p` is `[2, 2]`.
#[derive(Clone, Copy, Debug)]
pub struct TapeEkf<'t> {
    pub z: Var<'t>,
    pub p: Var<'t>,
}

impl<'t> TapeEkf<'t> {
    pub fn init(tape: &'t Tape, state: &EkfState) -> Self {
        let z = Tensor::column(&[state.z[0], state.z[1]]);
        let p = Tensor::matrix(2, 2, &[state.p[(0, 0)], state.p[(0, 1)], state.p[(1, 0)], state.p[(1, 1)]])
            .expect("2x2");
        Self { z: tape.constant(z), p: tape.constant(p) }
    }

    pub fn predict(self, q: f64) -> Result<Self, NnError> {
        let tape = self.p.tape();
        let q = tape.constant(Tensor::eye(2).map(|v| v * q));
        Ok(Self { z: self.z, p: self.p.add(q)? })
    }

    pub fn position(&self) -> Point {
        let v = self.z.value();
        [v.data()[0], v.data()[1]]
    }

    /// Same algebra as [`ekf_update`] with `d` and `s` as `[N, 1]` tape values.
    pub fn update(self, aps: &[Point], d: Var<'t>, s: Var<'t>, cfg: &EkfConfig) -> Result<Self, NnError> {
        let tape = self.z.tape();
        let rows = usable_rows(self.position(), aps, cfg.guard);
        if rows.is_empty() {
            return Ok(self);
        }
        let n = rows.len();
        let (d, s) = if n == aps.len() {
            (d, s)
        } else {
            (d.gather(&rows, &[n, 1])?, s.gather(&rows, &[n, 1])?)
        };
        let anchors: Vec<f64> = rows.iter().flat_map(|&r| aps[r]).collect();
        let anchors = tape.constant(Tensor::matrix(n, 2, &anchors)?);
        let diff = self.z.transpose()?.sub(anchors)?;
        let range = diff.square().sum_axis(1)?.sqrt();
        let h = diff.div(range)?;
        let e = d.sub(range)?;
        let lambda = s.square().mul(tape.constant(Tensor::eye(n)))?;
        let ht = h.transpose()?;
        let s_mat = h.matmul(self.p)?.matmul(ht)?.add(lambda)?;
        let g = self.p.matmul(ht)?.matmul(s_mat.inverse()?)?;
        let z = self.z.add(g.matmul(e)?)?;
        let a = tape.constant(Tensor::eye(2)).sub(g.matmul(h)?)?;
        let p = if cfg.joseph {
            a.matmul(self.p)?.matmul(a.transpose()?)?.add(g.matmul(lambda)?.matmul(g.transpose()?)?)?
        } else {
            a.matmul(self.p)?
        };
        let p = p.add(p.transpose()?)?.scale(0.5);
        Ok(Self { z, p })
    }
}
