//! Per-sub-carrier frequency response of a beacon frame.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{subcarrier_index, MultipathProfile, SimError, NUM_SUBCARRIERS, SUBCARRIER_SPACING};

/// Smallest and largest signed 10-bit code.
pub const QUANT_MIN: i32 = -512;
pub const QUANT_MAX: i32 = 511;

/// CSI and RSS of one beacon on one receive antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiFrame {
    pub ap_id: usize,
    pub antenna_id: u8,
    pub timestamp: f64,
    /// Responses for sub-carriers −26…−1, 1…26 in that order.
    pub h: Vec<Complex64>,
    pub rss_dbm: f64,
}

impl CsiFrame {
    pub fn mean_power(&self) -> f64 {
        self.h.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.h.len() as f64
    }

    pub fn amplitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.h.iter().map(|v| v.norm())
    }

    pub fn is_valid(&self) -> bool {
        self.h.len() == NUM_SUBCARRIERS
            && self.antenna_id <= 1
            && self.rss_dbm.is_finite()
            && self.timestamp.is_finite()
            && self.h.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Evaluates the profile on the sub-carrier grid and adds complex Gaussian
/// noise of variance `noise_power` per sub-carrier.
///
/// `rss_dbm` is the mean sub-carrier power in dB relative to the profile's
/// power scale; callers add the link budget on top.
pub fn cir_to_csi<R: Rng + ?Sized>(
    profile: &MultipathProfile,
    noise_power: f64,
    rng: &mut R,
) -> Result<CsiFrame, SimError> {
    if !(noise_power >= 0.0) {
        return Err(SimError::NegativeNoise(noise_power));
    }
    let mut h = vec![Complex64::new(0.0, 0.0); NUM_SUBCARRIERS];
    for tap in profile.taps() {
        let w = -std::f64::consts::TAU * SUBCARRIER_SPACING * tap.delay;
        // rotate a phasor across the grid instead of one sincos per bin
        let step = Complex64::from_polar(1.0, w);
        let mut rot = tap.coefficient * Complex64::from_polar(1.0, w * subcarrier_index(0) as f64);
        for (i, v) in h.iter_mut().enumerate() {
            if i == 26 {
                rot *= step;
            }
            *v += rot;
            rot *= step;
        }
    }
    if noise_power > 0.0 {
        let sigma = (noise_power / 2.0).sqrt();
        for v in &mut h {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *v += Complex64::new(re, im) * sigma;
        }
    }
    let mean = h.iter().map(|v| v.norm_sqr()).sum::<f64>() / NUM_SUBCARRIERS as f64;
    Ok(CsiFrame { ap_id: 0, antenna_id: 0, timestamp: 0.0, h, rss_dbm: 10.0 * mean.max(1e-30).log10() })
}

/// Rounds real and imaginary parts to the signed 10-bit grid spanning
/// ±`full_scale`, saturating at the extreme codes. Returns the codes.
pub fn quantize(frame: &mut CsiFrame, full_scale: f64) -> Vec<(i32, i32)> {
    let step = full_scale / 512.0;
    let code = |v: f64| ((v / step).round() as i64).clamp(QUANT_MIN as i64, QUANT_MAX as i64) as i32;
    frame
        .h
        .iter_mut()
        .map(|v| {
            let (re, im) = (code(v.re), code(v.im));
            *v = Complex64::new(re as f64 * step, im as f64 * step);
            (re, im)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::Tap;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile(taps: &[(f64, f64)]) -> MultipathProfile {
        MultipathProfile::new(
            taps.iter().map(|&(c, d)| Tap { coefficient: Complex64::new(c, 0.0), delay: d }).collect(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn flat_response_for_single_tap_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = cir_to_csi(&profile(&[(1.0, 0.0)]), 0.0, &mut rng).unwrap();
        assert!(f.h.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        assert!(f.rss_dbm.abs() < 1e-12);
    }

    #[test]
    fn two_tap_response_at_edge_subcarrier() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = cir_to_csi(&profile(&[(1.0, 0.0), (0.5, 50e-9)]), 0.0, &mut rng).unwrap();
        let phase = -std::f64::consts::TAU * (26.0 * 312_500.0) * 50e-9;
        let expect = Complex64::new(1.0, 0.0) + Complex64::from_polar(0.5, phase);
        assert!((f.h[51] - expect).norm() < 1e-12);
    }

    #[test]
    fn negative_noise_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            cir_to_csi(&profile(&[(1.0, 0.0)]), -1.0, &mut rng),
            Err(SimError::NegativeNoise(_))
        ));
    }

    #[test]
    fn quantization_fits_ten_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = cir_to_csi(&profile(&[(3.0, 0.0), (2.5, 100e-9)]), 0.01, &mut rng).unwrap();
        let codes = quantize(&mut f, 4.0);
        assert_eq!(codes.len(), NUM_SUBCARRIERS);
        for (i, &(re, im)) in codes.iter().enumerate() {
            assert!((QUANT_MIN..=QUANT_MAX).contains(&re));
            assert!((QUANT_MIN..=QUANT_MAX).contains(&im));
            assert_eq!(f.h[i].re, re as f64 * 4.0 / 512.0);
        }
    }
}
