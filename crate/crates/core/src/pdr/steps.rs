//! Peak/valley step detection on the filtered vertical acceleration.

use super::StepEvent;

/// Thresholds of the step detector.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDetector {
    /// Minimum peak-to-valley swing (m/s²).
    pub prominence: f64,
    /// Minimum time between consecutive step peaks (s).
    pub min_spacing: f64,
    /// α of the fourth-root stride model.
    pub coefficient: f64,
}

impl Default for StepDetector {
    fn default() -> Self {
        Self { prominence: 0.5, min_spacing: 0.3, coefficient: super::STEP_COEFFICIENT }
    }
}

/// Stride from one peak/valley pair: α·(a_max − a_min)^¼.
pub fn step_length(coefficient: f64, peak: f64, valley: f64) -> f64 {
    coefficient * (peak - valley).max(0.0).powf(0.25)
}

#[derive(Clone, Copy)]
enum Seek {
    Valley,
    Peak,
}

/// Finds steps as a confirmed peak followed by a confirmed valley.
///
/// Extrema are confirmed by hysteresis: a running maximum becomes a peak once
/// the signal has fallen `prominence` below it, and symmetrically for valleys.
/// The detector starts by looking for a valley, so the drop from a standing
/// rest level into the first stride does not count as a step. A valley still
/// pending at the end of the stream is accepted if its swing qualifies.
pub fn detect_steps(times: &[f64], filtered: &[f64], cfg: &StepDetector) -> Vec<StepEvent> {
    assert_eq!(times.len(), filtered.len());
    let mut steps = Vec::new();
    if filtered.is_empty() {
        return steps;
    }
    let h = cfg.prominence;
    let mut seek = Seek::Valley;
    let (mut ext_i, mut ext_v) = (0usize, filtered[0]);
    let mut peak: Option<(usize, f64)> = None;
    let mut last_peak_t = f64::NEG_INFINITY;

    let mut emit = |peak: (usize, f64), valley: (usize, f64), last_peak_t: &mut f64| {
        let t_peak = times[peak.0];
        if peak.1 - valley.1 >= h && t_peak - *last_peak_t >= cfg.min_spacing {
            steps.push(StepEvent {
                time: times[valley.0],
                length: step_length(cfg.coefficient, peak.1, valley.1),
                peak_accel: peak.1,
                valley_accel: valley.1,
            });
            *last_peak_t = t_peak;
        }
    };

    for (i, &v) in filtered.iter().enumerate().skip(1) {
        match seek {
            Seek::Valley => {
                if v < ext_v {
                    ext_i = i;
                    ext_v = v;
                } else if v - ext_v >= h {
                    if let Some(p) = peak.take() {
                        emit(p, (ext_i, ext_v), &mut last_peak_t);
                    }
                    seek = Seek::Peak;
                    ext_i = i;
                    ext_v = v;
                }
            }
            Seek::Peak => {
                if v > ext_v {
                    ext_i = i;
                    ext_v = v;
                } else if ext_v - v >= h {
                    peak = Some((ext_i, ext_v));
                    seek = Seek::Valley;
                    ext_i = i;
                    ext_v = v;
                }
            }
        }
    }
    if let (Seek::Valley, Some(p)) = (seek, peak) {
        emit(p, (ext_i, ext_v), &mut last_peak_t);
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_stream_has_no_steps() {
        let t: Vec<f64> = (0..300).map(|i| i as f64 / 100.0).collect();
        assert!(detect_steps(&t, &vec![9.8; 300], &StepDetector::default()).is_empty());
        assert!(detect_steps(&[], &[], &StepDetector::default()).is_empty());
    }

    #[test]
    fn unit_swing_gives_alpha() {
        assert!((step_length(0.55, 10.3, 9.3) - 0.55).abs() < 1e-12);
        assert!((step_length(0.55, 16.0, 0.0) - 1.1).abs() < 1e-12);
    }

    #[test]
    fn counts_cosine_cycles() {
        // rest, then 5 strides starting from a valley, then rest
        let mut x = vec![9.8; 100];
        for i in 0..500 {
            x.push(9.8 - (std::f64::consts::TAU * i as f64 / 100.0).cos());
        }
        x.extend(vec![9.8; 100]);
        let t: Vec<f64> = (0..x.len()).map(|i| i as f64 / 100.0).collect();
        let steps = detect_steps(&t, &x, &StepDetector::default());
        assert_eq!(steps.len(), 5);
        for s in &steps {
            assert!((s.peak_accel - s.valley_accel - 2.0).abs() < 5e-3);
            assert!(s.peak_accel > s.valley_accel);
        }
    }

    #[test]
    fn close_peaks_are_suppressed() {
        let cfg = StepDetector { min_spacing: 1.5, ..Default::default() };
        let x: Vec<f64> = (0..600).map(|i| -(std::f64::consts::TAU * i as f64 / 100.0).cos()).collect();
        let t: Vec<f64> = (0..600).map(|i| i as f64 / 100.0).collect();
        let all = detect_steps(&t, &x, &StepDetector::default()).len();
        let sparse = detect_steps(&t, &x, &cfg).len();
        assert!(sparse < all);
    }
}
