//! Multipath channel impulse responses.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{distance, Point, SimError, SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    Los,
    Nlos,
}

/// One propagation path: complex gain and delay (s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub coefficient: Complex64,
    pub delay: f64,
}

/// A discrete channel impulse response, taps sorted by delay.
#[derive(Clone, Debug, PartialEq)]
pub struct MultipathProfile {
    taps: Vec<Tap>,
    los: bool,
}

impl MultipathProfile {
    pub fn new(mut taps: Vec<Tap>, los: bool) -> Result<Self, SimError> {
        if taps.is_empty() {
            return Err(SimError::Profile("at least one tap required".into()));
        }
        for t in &taps {
            if !(t.delay >= 0.0) || !t.delay.is_finite() {
                return Err(SimError::Profile(format!("bad delay {}", t.delay)));
            }
            if !t.coefficient.re.is_finite() || !t.coefficient.im.is_finite() {
                return Err(SimError::Profile("non-finite coefficient".into()));
            }
        }
        taps.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        Ok(Self { taps, los })
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn is_los(&self) -> bool {
        self.los
    }

    /// Σ |c_l|².
    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.coefficient.norm_sqr()).sum()
    }

    pub fn first_delay(&self) -> f64 {
        self.taps[0].delay
    }

    /// Same paths with the first arrival moved to `first` seconds, as seen by a
    /// receiver that synchronizes on the earliest path.
    pub fn aligned_to(&self, first: f64) -> Result<Self, SimError> {
        let shift = first - self.first_delay();
        let taps = self.taps.iter().map(|t| Tap { delay: t.delay + shift, ..*t }).collect();
        Self::new(taps, self.los)
    }
}

/// Shape of the synthetic power-delay profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Σ |c_l|² of every generated profile.
    pub total_power: f64,
    /// Exponential decay constant of the NLOS profile (s).
    pub rms_delay_spread: f64,
    /// Decay constant of the diffuse part under LOS (s).
    pub los_rms_delay_spread: f64,
    /// Share of total power carried by the direct path under LOS.
    pub los_power_fraction: f64,
    pub tap_count: usize,
    pub tap_spacing: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            total_power: 1.0,
            rms_delay_spread: 50e-9,
            los_rms_delay_spread: 25e-9,
            los_power_fraction: 0.6,
            tap_count: 24,
            tap_spacing: 6.25e-9,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.total_power > 0.0
            && self.rms_delay_spread > 0.0
            && self.los_rms_delay_spread > 0.0
            && (0.0..=1.0).contains(&self.los_power_fraction)
            && self.tap_count >= 2
            && self.tap_spacing > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::Config("invalid channel parameters".into()))
        }
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rayleigh taps on an exponential power-delay profile, rescaled to `power`.
fn diffuse_taps<R: Rng + ?Sized>(
    start: f64,
    count: usize,
    spacing: f64,
    decay: f64,
    power: f64,
    rng: &mut R,
) -> Vec<Tap> {
    let mut taps: Vec<Tap> = (0..count)
        .map(|l| {
            let excess = l as f64 * spacing;
            let gain = (-excess / decay).exp().sqrt();
            Tap { coefficient: complex_gaussian(rng) * gain, delay: start + excess }
        })
        .collect();
    let drawn: f64 = taps.iter().map(|t| t.coefficient.norm_sqr()).sum();
    let scale = if drawn > 0.0 { (power / drawn).sqrt() } else { 0.0 };
    for t in &mut taps {
        t.coefficient *= scale;
    }
    taps
}

/// Draws a multipath profile between an AP and the device.
///
/// The first path arrives after the free-space delay. Under LOS it is a
/// deterministic-amplitude direct path carrying `los_power_fraction` of the
/// power; under NLOS every tap is Rayleigh on an exponential profile.
pub fn synthesize_cir<R: Rng + ?Sized>(
    ap: Point,
    dev: Point,
    scenario: Scenario,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<MultipathProfile, SimError> {
    params.validate()?;
    let d = distance(ap, dev);
    if !(d > 0.0) {
        return Err(SimError::CoincidentPositions);
    }
    let tau0 = d / SPEED_OF_LIGHT;
    let p = params.total_power;
    let taps = match scenario {
        Scenario::Los => {
            let f = params.los_power_fraction;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let mut taps = vec![Tap { coefficient: Complex64::from_polar((f * p).sqrt(), phase), delay: tau0 }];
            taps.extend(diffuse_taps(
                tau0 + params.tap_spacing,
                params.tap_count - 1,
                params.tap_spacing,
                params.los_rms_delay_spread,
                (1.0 - f) * p,
                rng,
            ));
            taps
        }
        Scenario::Nlos => {
            diffuse_taps(tau0, params.tap_count, params.tap_spacing, params.rms_delay_spread, p, rng)
        }
    };
    MultipathProfile::new(taps, scenario == Scenario::Los)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_tap_profile() {
        let p = MultipathProfile::new(vec![Tap { coefficient: Complex64::new(1.0, 0.0), delay: 0.0 }], true).unwrap();
        assert_eq!(p.taps().len(), 1);
        assert!(p.is_los());
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(MultipathProfile::new(vec![], false).is_err());
        let neg = Tap { coefficient: Complex64::new(1.0, 0.0), delay: -1e-9 };
        assert!(MultipathProfile::new(vec![neg], false).is_err());
    }

    #[test]
    fn taps_are_sorted() {
        let t = |d| Tap { coefficient: Complex64::new(1.0, 0.0), delay: d };
        let p = MultipathProfile::new(vec![t(3e-9), t(1e-9), t(2e-9)], false).unwrap();
        let delays: Vec<f64> = p.taps().iter().map(|t| t.delay).collect();
        assert_eq!(delays, vec![1e-9, 2e-9, 3e-9]);
    }

    #[test]
    fn los_first_tap_delay_is_free_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = synthesize_cir([0.0, 0.0], [3.0, 4.0], Scenario::Los, &ChannelParams::default(), &mut rng).unwrap();
        // 5 m / 2.998e8 m/s
        assert!((p.first_delay() - 16.678e-9).abs() < 1e-12);
        let share = p.taps()[0].coefficient.norm_sqr() / p.total_power();
        assert!(share >= 0.6 - 1e-12);
    }

    #[test]
    fn nlos_power_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = ChannelParams { total_power: 2.5, ..Default::default() };
        for _ in 0..50 {
            let p = synthesize_cir([0.0, 0.0], [7.0, 1.0], Scenario::Nlos, &params, &mut rng).unwrap();
            assert!((p.total_power() - 2.5).abs() < 1e-9);
            assert!(!p.is_los());
        }
    }

    #[test]
    fn nlos_has_no_dominant_tap() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ChannelParams::default();
        let mut first_share = 0.0;
        let n = 2000;
        let mut dominant = 0;
        for _ in 0..n {
            let p = synthesize_cir([0.0, 0.0], [9.0, 2.0], Scenario::Nlos, &params, &mut rng).unwrap();
            let total = p.total_power();
            first_share += p.taps()[0].coefficient.norm_sqr() / total;
            if p.taps().iter().any(|t| t.coefficient.norm_sqr() / total >= params.los_power_fraction) {
                dominant += 1;
            }
        }
        assert!(first_share / (n as f64) < 0.2);
        assert!(dominant * 100 < n, "{dominant} of {n} NLOS draws had a dominant tap");
    }

    #[test]
    fn coincident_positions_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let r = synthesize_cir([1.0, 1.0], [1.0, 1.0], Scenario::Los, &ChannelParams::default(), &mut rng);
        assert!(matches!(r, Err(SimError::CoincidentPositions)));
    }

    #[test]
    fn alignment_keeps_relative_delays() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = synthesize_cir([0.0, 0.0], [30.0, 0.0], Scenario::Nlos, &ChannelParams::default(), &mut rng).unwrap();
        let q = p.aligned_to(2e-9).unwrap();
        assert!((q.first_delay() - 2e-9).abs() < 1e-18);
        let gap_p = p.taps()[3].delay - p.taps()[0].delay;
        let gap_q = q.taps()[3].delay - q.taps()[0].delay;
        assert!((gap_p - gap_q).abs() < 1e-18);
    }
}
