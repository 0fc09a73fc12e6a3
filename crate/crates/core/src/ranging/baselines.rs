//! Closed-form rangers calibrated on labeled walks.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{RangingError, RangingInput, RangingOutput};
use crate::channel_sim::NUM_SUBCARRIERS;

/// ŝ = slope·d̂ + intercept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearStd {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearStd {
    pub fn at(&self, d: f64) -> f64 {
        self.slope * d + self.intercept
    }

    fn validate(&self) -> Result<(), RangingError> {
        if !(self.slope >= 0.0) || !self.intercept.is_finite() {
            return Err(RangingError::Calibration(format!("std model {self:?}")));
        }
        Ok(())
    }
}

/// Log-distance law with a 1 m reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    pub rss_d0: f64,
    pub eta: f64,
    pub std: LinearStd,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self { rss_d0: -25.8, eta: 3.9, std: LinearStd { slope: 0.1897, intercept: 0.3672 } }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialParams {
    pub g2: f64,
    pub g1: f64,
    pub g0: f64,
    pub std: LinearStd,
}

impl Default for PolynomialParams {
    fn default() -> Self {
        Self { g2: 0.0138, g1: 1.1642, g0: 27.7688, std: LinearStd { slope: 0.1622, intercept: 0.6156 } }
    }
}

impl PolynomialParams {
    pub fn eval(&self, rss: f64) -> f64 {
        (self.g2 * rss + self.g1) * rss + self.g0
    }
}

/// Path-loss law whose exponent depends on the direct-path energy share.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CupidParams {
    pub rss_d0: f64,
    pub eta_los: f64,
    pub eta_nlos: f64,
    /// Ratio at or above which a link is treated as line of sight.
    pub edp_ratio_threshold: f64,
    pub std: LinearStd,
}

impl Default for CupidParams {
    fn default() -> Self {
        Self {
            rss_d0: -25.8,
            eta_los: 3.0,
            eta_nlos: 3.9,
            edp_ratio_threshold: 0.5,
            std: LinearStd { slope: 0.1897, intercept: 0.3672 },
        }
    }
}

/// All closed-form backends together, as stored by `fit-baselines`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    pub pathloss: PathLossParams,
    pub polynomial: PolynomialParams,
    pub cupid: CupidParams,
}

impl CalibrationParams {
    pub fn validate(&self) -> Result<(), RangingError> {
        for eta in [self.pathloss.eta, self.cupid.eta_los, self.cupid.eta_nlos] {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(RangingError::Calibration(format!("path-loss exponent {eta}")));
            }
        }
        self.pathloss.std.validate()?;
        self.polynomial.std.validate()?;
        self.cupid.std.validate()
    }
}

/// d₀·10^((RSS(d₀) − RSS)/(10η)) with d₀ = 1 m.
pub fn pathloss_distance(rss: f64, rss_d0: f64, eta: f64) -> f64 {
    10f64.powf((rss_d0 - rss) / (10.0 * eta))
}

pub fn pathloss_range(input: &RangingInput, p: &PathLossParams) -> Result<RangingOutput, RangingError> {
    input.validate()?;
    let d = pathloss_distance(input.mean_rss(), p.rss_d0, p.eta);
    Ok(RangingOutput::clamped(d, p.std.at(d)))
}

pub fn polynomial_range(input: &RangingInput, p: &PolynomialParams) -> Result<RangingOutput, RangingError> {
    input.validate()?;
    let d = p.eval(input.mean_rss());
    Ok(RangingOutput::clamped(d, p.std.at(d)))
}

/// Share of CSI energy in the first time-domain tap, averaged over frames.
///
/// Tap 0 of the zero-padded 64-point inverse DFT is proportional to the mean
/// of the 52 responses, so the share reduces to |mean h|² / mean |h|², which
/// is 1 for a flat response and shrinks as delayed paths gain weight.
pub fn edp_ratio(csi: &[Complex64]) -> f64 {
    let frames = csi.chunks_exact(NUM_SUBCARRIERS);
    let n = frames.len();
    let sum: f64 = frames
        .map(|h| {
            let mean: Complex64 = h.iter().sum::<Complex64>() / NUM_SUBCARRIERS as f64;
            let power = h.iter().map(|v| v.norm_sqr()).sum::<f64>() / NUM_SUBCARRIERS as f64;
            if power > 0.0 { mean.norm_sqr() / power } else { 0.0 }
        })
        .sum();
    sum / n as f64
}

pub fn cupid_range(input: &RangingInput, p: &CupidParams) -> Result<RangingOutput, RangingError> {
    input.validate()?;
    if !input.has_csi() {
        return Err(RangingError::Input("the cupid backend needs CSI columns, the input has RSS only".into()));
    }
    let eta = if edp_ratio(&input.csi_complex) >= p.edp_ratio_threshold { p.eta_los } else { p.eta_nlos };
    let d = pathloss_distance(input.mean_rss(), p.rss_d0, eta);
    Ok(RangingOutput::clamped(d, p.std.at(d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(rss: f64) -> RangingInput {
        let n = 2 * NUM_SUBCARRIERS;
        RangingInput {
            ap_id: 0,
            beacons: 1,
            csi: vec![1.0; n],
            csi_complex: vec![Complex64::new(1.0, 0.0); n],
            rss: vec![rss; 2],
        }
    }

    #[test]
    fn pathloss_reference_points() {
        let p = PathLossParams::default();
        let o = pathloss_range(&input(-25.8), &p).unwrap();
        assert_eq!(o.d_hat, 1.0);
        assert!((o.s_hat - 0.5569).abs() < 1e-12);
        let o = pathloss_range(&input(-64.8), &p).unwrap();
        assert!((o.d_hat - 10.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_reference_points() {
        let p = PolynomialParams::default();
        let o = polynomial_range(&input(-50.0), &p).unwrap();
        assert!((o.d_hat - 4.0588).abs() < 1e-9);
        assert!((o.s_hat - 1.27393736).abs() < 1e-6);
        let o = polynomial_range(&input(0.0), &p).unwrap();
        assert!((o.d_hat - 27.7688).abs() < 1e-12);
    }

    #[test]
    fn flat_csi_is_all_direct_path() {
        assert!((edp_ratio(&input(-40.0).csi_complex) - 1.0).abs() < 1e-12);
        let p = CupidParams::default();
        let o = cupid_range(&input(-25.8 - 30.0), &p).unwrap();
        assert!((o.d_hat - 10.0).abs() < 1e-12);
    }

    #[test]
    fn delayed_energy_lowers_the_ratio() {
        // one tap at 0 and an equal tap 100 ns later
        let h: Vec<Complex64> = crate::channel_sim::subcarrier_indices()
            .iter()
            .map(|&n| {
                let w = -std::f64::consts::TAU * n as f64 * 312_500.0 * 100e-9;
                Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, w)
            })
            .collect();
        assert!(edp_ratio(&h) < 0.6);
    }
}
