//! Second-order Butterworth low-pass, applied forward and backward.

use num_complex::Complex64;

use super::PdrError;

/// Biquad coefficients `(b0, b1, b2, a1, a2)` with `a0 = 1`.
fn butterworth2(cutoff_hz: f64, sample_rate: f64) -> Result<[f64; 5], PdrError> {
    if !(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate / 2.0) {
        return Err(PdrError::Cutoff { cutoff_hz, nyquist_hz: sample_rate / 2.0 });
    }
    let k = (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
    let s2 = std::f64::consts::SQRT_2;
    let norm = 1.0 / (1.0 + s2 * k + k * k);
    let b0 = k * k * norm;
    Ok([b0, 2.0 * b0, b0, 2.0 * (k * k - 1.0) * norm, (1.0 - s2 * k + k * k) * norm])
}

/// Power gain |H(f)|² of the forward-backward filter, i.e. the amplitude
/// gain of the zero-phase cascade at frequency `freq_hz`.
pub fn zero_phase_gain(freq_hz: f64, cutoff_hz: f64, sample_rate: f64) -> Result<f64, PdrError> {
    let [b0, b1, b2, a1, a2] = butterworth2(cutoff_hz, sample_rate)?;
    let w = std::f64::consts::TAU * freq_hz / sample_rate;
    let z1 = Complex64::from_polar(1.0, -w);
    let z2 = z1 * z1;
    let h = (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
    Ok(h.norm_sqr())
}

/// One causal pass, state primed to the steady state of the first sample.
fn run(coef: &[f64; 5], x: &[f64]) -> Vec<f64> {
    let [b0, b1, b2, a1, a2] = *coef;
    let Some(&x0) = x.first() else { return Vec::new() };
    let mut z2 = (b2 - a2) * x0;
    let mut z1 = (b1 - a1) * x0 + z2;
    x.iter()
        .map(|&v| {
            let y = b0 * v + z1;
            z1 = b1 * v - a1 * y + z2;
            z2 = b2 * v - a2 * y;
            y
        })
        .collect()
}

/// Zero-phase low-pass of a uniformly sampled stream.
///
/// Edges are extended by odd reflection before filtering so that a constant
/// input is returned unchanged and end transients stay small.
pub fn lowpass_z(samples: &[f64], cutoff_hz: f64, sample_rate: f64) -> Result<Vec<f64>, PdrError> {
    let coef = butterworth2(cutoff_hz, sample_rate)?;
    let n = samples.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let pad = ((sample_rate / cutoff_hz).ceil() as usize).min(n - 1);
    let (first, last) = (samples[0], samples[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - samples[i]));
    ext.extend_from_slice(samples);
    ext.extend((1..=pad).map(|i| 2.0 * last - samples[n - 1 - i]));

    let mut y = run(&coef, &ext);
    y.reverse();
    let mut y = run(&coef, &y);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}
