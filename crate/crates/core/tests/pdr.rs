use beaconloc::channel_sim::*;
use beaconloc::pdr::{self, PdrConfig, StepEvent};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn site() -> SiteConfig {
    SiteConfig::new(vec![[0.0, 0.0], [20.0, 0.0], [0.0, 20.0]], vec![1, 6, 11], 2)
}

fn route() -> Vec<Point> {
    vec![[2.0, 2.0], [14.0, 2.0], [14.0, 10.0], [6.0, 10.0], [6.0, 4.0]]
}

fn path_length(p: &[Point]) -> f64 {
    p.windows(2).map(|w| distance(w[0], w[1])).sum()
}

#[test]
fn clean_walk_step_count_and_distance_are_exact() {
    let w = generate_walk(&site(), &route(), 1.0, &ImuParams::clean(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let (steps, _) = pdr::run(&w.imu, &PdrConfig::default()).unwrap();
    assert_eq!(steps.len(), w.truth.step_times.len());
    let walked: f64 = steps.iter().map(|s| s.length).sum();
    let truth = path_length(&route());
    assert!((walked - truth).abs() < 1e-3 * truth, "{walked} vs {truth}");
    for (s, t) in steps.iter().zip(&w.truth.step_times) {
        // the final valley sits on the jump back to rest and is smeared by the filter
        assert!((s.time - t).abs() < 0.06, "{} vs {t}", s.time);
        assert!(s.length > 0.0 && s.peak_accel > s.valley_accel);
    }
}

#[test]
fn noisy_walk_within_five_percent() {
    for seed in 0..5 {
        let w = generate_walk(&site(), &route(), 1.0, &ImuParams::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (steps, _) = pdr::run(&w.imu, &PdrConfig::default()).unwrap();
        let n = w.truth.step_times.len() as f64;
        assert!((steps.len() as f64 - n).abs() <= 0.05 * n, "seed {seed}: {} vs {n}", steps.len());
        let walked: f64 = steps.iter().map(|s| s.length).sum();
        let truth = path_length(&route());
        assert!((walked - truth).abs() <= 0.05 * truth, "seed {seed}: {walked} vs {truth}");
    }
}

#[test]
fn walking_waveform_survives_the_filter() {
    let x: Vec<f64> = (0..3000).map(|i| (std::f64::consts::TAU * i as f64 / 100.0).cos()).collect();
    let y = pdr::lowpass_z(&x, 3.0, 100.0).unwrap();
    let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
    assert!((rms(&y) / rms(&x) - 1.0).abs() < 0.1);
}

#[test]
fn trajectory_times_are_monotone() {
    let w = generate_walk(&site(), &route(), 1.0, &ImuParams::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let (_, traj) = pdr::run(&w.imu, &PdrConfig::default()).unwrap();
    assert!(traj.times.windows(2).all(|t| t[0] <= t[1]));
    assert!(traj.positions.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
    let held = pdr::synchronize(&traj, &w.scan_times).unwrap();
    assert_eq!(held.len(), w.scan_times.len());
}

proptest! {
    #[test]
    fn integrate_is_translation_equivariant(
        steps in prop::collection::vec((0.1f64..1.2, -3.2f64..3.2), 0..30),
        ox in -100.0f64..100.0,
        oy in -100.0f64..100.0,
    ) {
        let events: Vec<StepEvent> = steps.iter().enumerate()
            .map(|(i, &(l, _))| StepEvent { time: i as f64 + 0.5, length: l, peak_accel: 1.0, valley_accel: 0.0 })
            .collect();
        let times: Vec<f64> = (0..=steps.len()).map(|i| i as f64).collect();
        let mut headings: Vec<f64> = steps.iter().map(|s| s.1).collect();
        headings.push(0.0);
        let a = pdr::integrate(&events, &times, &headings, [0.0, 0.0]).unwrap();
        let b = pdr::integrate(&events, &times, &headings, [ox, oy]).unwrap();
        for (p, q) in a.positions.iter().zip(&b.positions) {
            prop_assert!((p[0] + ox - q[0]).abs() < 1e-9);
            prop_assert!((p[1] + oy - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn detected_steps_have_positive_swing(seed in any::<u64>(), amp in 0.5f64..4.0, period in 0.4f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = rand_distr::Normal::new(0.0, 0.2).unwrap();
        let x: Vec<f64> = (0..2000)
            .map(|i| 9.8 - amp * (std::f64::consts::TAU * i as f64 / 100.0 / period).cos()
                + rand_distr::Distribution::sample(&noise, &mut rng))
            .collect();
        let t: Vec<f64> = (0..2000).map(|i| i as f64 / 100.0).collect();
        let y = pdr::lowpass_z(&x, 3.0, 100.0).unwrap();
        let steps = pdr::detect_steps(&t, &y, &pdr::StepDetector::default());
        for s in &steps {
            prop_assert!(s.length > 0.0 && s.peak_accel > s.valley_accel);
        }
        prop_assert!(steps.windows(2).all(|w| w[0].time < w[1].time));
    }
}
