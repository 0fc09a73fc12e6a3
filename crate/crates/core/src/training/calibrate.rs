//! Fitting the closed-form rangers on labeled walks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::Epoch;
use super::TrainingError;
use crate::ranging::{
    cupid_range, edp_ratio, pathloss_range, polynomial_range, CalibrationParams, CupidParams, LinearStd,
    PathLossParams, PolynomialParams, RangingInput, RangingOutput,
};

/// Exponent search range and grid step.
const ETA_RANGE: (f64, f64) = (1.0, 6.0);
const ETA_STEP: f64 = 0.01;
/// Samples needed for a distance bucket to count in the std fit.
const MIN_BUCKET: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSample {
    pub input: RangingInput,
    pub distance: f64,
    pub los: bool,
}

/// Quality of a fit on its own calibration data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub samples: usize,
    pub nmse_pathloss: f64,
    pub nmse_polynomial: f64,
    pub nmse_cupid: f64,
    pub cupid_accuracy: f64,
}

/// Every ranged AP of every labeled epoch.
pub fn calibration_samples(epochs: &[Epoch]) -> Result<Vec<CalibrationSample>, TrainingError> {
    let mut out = Vec::new();
    for e in epochs {
        let links = e.link_truth.as_ref().ok_or_else(|| TrainingError::Input("calibration data is unlabeled".into()))?;
        for (input, &(distance, los)) in e.inputs.iter().zip(links) {
            out.push(CalibrationSample { input: input.clone(), distance, los });
        }
    }
    Ok(out)
}

fn nmse(pred: impl Iterator<Item = f64>, truth: &[f64]) -> f64 {
    pred.zip(truth).map(|(p, d)| ((p - d) / d).powi(2)).sum::<f64>() / truth.len() as f64
}

/// Best reference RSS for a fixed exponent, in closed form, and its NMSE.
///
/// With u = 10^(−r/(10η))/d the prediction over truth is c·u, c = 10^(r₀/(10η)),
/// so the NMSE is mean((cu − 1)²), minimised at c = Σu/Σu².
fn best_reference(rss: &[f64], dist: &[f64], eta: f64) -> (f64, f64) {
    let u: Vec<f64> = rss.iter().zip(dist).map(|(r, d)| 10f64.powf(-r / (10.0 * eta)) / d).collect();
    let c = u.iter().sum::<f64>() / u.iter().map(|v| v * v).sum::<f64>();
    let err = u.iter().map(|v| (c * v - 1.0).powi(2)).sum::<f64>() / u.len() as f64;
    (10.0 * eta * c.log10(), err)
}

fn pathloss_nmse(rss: &[f64], dist: &[f64], rss_d0: f64, eta: f64) -> f64 {
    nmse(rss.iter().map(|r| 10f64.powf((rss_d0 - r) / (10.0 * eta))), dist)
}

/// Grid search over η followed by golden-section refinement around the best
/// grid point.
fn minimise_eta(f: impl Fn(f64) -> f64) -> f64 {
    let n = ((ETA_RANGE.1 - ETA_RANGE.0) / ETA_STEP).round() as usize;
    let grid = (0..=n).map(|i| ETA_RANGE.0 + i as f64 * ETA_STEP);
    let (mut best, mut best_val) = (ETA_RANGE.0, f64::INFINITY);
    for eta in grid {
        let v = f(eta);
        if v < best_val {
            (best, best_val) = (eta, v);
        }
    }
    let (mut a, mut b) = ((best - ETA_STEP).max(ETA_RANGE.0), (best + ETA_STEP).min(ETA_RANGE.1));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            (b, d, fd) = (d, c, fc);
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            (a, c, fc) = (c, d, fd);
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let refined = 0.5 * (a + b);
    if f(refined) <= best_val { refined } else { best }
}

fn fit_pathloss(rss: &[f64], dist: &[f64]) -> (f64, f64) {
    let eta = minimise_eta(|eta| best_reference(rss, dist, eta).1);
    (best_reference(rss, dist, eta).0, eta)
}

/// RSS range (dBm) over which a fitted quadratic must not increase.
pub const RSS_DOMAIN: (f64, f64) = (-90.0, -25.0);

/// Weighted least squares over the basis `f`; returns coefficients and the
/// weighted squared error.
fn weighted_fit<const N: usize>(
    rss: &[f64],
    dist: &[f64],
    f: impl Fn(f64) -> [f64; N],
) -> Option<([f64; N], f64)> {
    let mut a = DMatrix::<f64>::zeros(N, N);
    let mut b = DVector::<f64>::zeros(N);
    for (r, d) in rss.iter().zip(dist) {
        let x = DVector::from_row_slice(&f(*r));
        let w = 1.0 / (d * d);
        a += w * &x * x.transpose();
        b += w * d * &x;
    }
    let g = a.lu().solve(&b)?;
    let err = rss
        .iter()
        .zip(dist)
        .map(|(r, d)| {
            let x = DVector::from_row_slice(&f(*r));
            ((g.dot(&x) - d) / d).powi(2)
        })
        .sum();
    Some((std::array::from_fn(|i| g[i]), err))
}

/// NMSE is a least-squares problem with weights 1/d², solved exactly, under
/// the constraint that the quadratic does not increase over [`RSS_DOMAIN`].
///
/// The slope is linear in RSS, so the constraint only binds at the two domain
/// ends. The minimiser is the best feasible one among the unconstrained fit,
/// the fits with the vertex pinned at either end, and a constant.
fn fit_polynomial(rss: &[f64], dist: &[f64]) -> Result<(f64, f64, f64), TrainingError> {
    let feasible = |g2: f64, g1: f64| [RSS_DOMAIN.0, RSS_DOMAIN.1].iter().all(|r| 2.0 * g2 * r + g1 <= 1e-12);
    let mut cands = Vec::new();
    if let Some((g, e)) = weighted_fit(rss, dist, |r| [r * r, r, 1.0]) {
        cands.push(((g[0], g[1], g[2]), e));
    }
    for v in [RSS_DOMAIN.0, RSS_DOMAIN.1] {
        // g₂(r − v)² + c
        if let Some((g, e)) = weighted_fit(rss, dist, |r| [(r - v) * (r - v), 1.0]) {
            cands.push(((g[0], -2.0 * g[0] * v, g[0] * v * v + g[1]), e));
        }
    }
    if let Some((g, e)) = weighted_fit(rss, dist, |_| [1.0]) {
        cands.push(((0.0, 0.0, g[0]), e));
    }
    cands
        .into_iter()
        .filter(|((g2, g1, _), e)| feasible(*g2, *g1) && e.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|c| c.0)
        .ok_or_else(|| TrainingError::Input("polynomial fit is singular".into()))
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Std of the ranging error among samples whose estimate lies within 1 m of
/// each integer target distance, then a least-squares line through those
/// points. A negative slope is replaced by a constant.
pub fn fit_std(estimates: &[f64], truth: &[f64]) -> LinearStd {
    let top = estimates.iter().copied().fold(0.0, f64::max).ceil() as usize;
    let mut pts = Vec::new();
    for t in 1..=top {
        let errs: Vec<f64> = estimates
            .iter()
            .zip(truth)
            .filter(|(e, _)| (*e - t as f64).abs() < 1.0)
            .map(|(e, d)| e - d)
            .collect();
        if errs.len() >= MIN_BUCKET {
            pts.push((t as f64, sample_std(&errs)));
        }
    }
    if pts.is_empty() {
        let errs: Vec<f64> = estimates.iter().zip(truth).map(|(e, d)| e - d).collect();
        let s = if errs.len() > 1 { sample_std(&errs) } else { 1.0 };
        return LinearStd { slope: 0.0, intercept: s };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    if slope < 0.0 {
        LinearStd { slope: 0.0, intercept: my }
    } else {
        LinearStd { slope, intercept: my - slope * mx }
    }
}

/// Threshold on the direct-path energy ratio with the best LOS/NLOS
/// accuracy; candidates are midpoints between sorted ratios.
fn fit_threshold(ratios: &[f64], los: &[bool]) -> (f64, f64) {
    let mut sorted: Vec<f64> = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut cands = vec![sorted[0] - 1e-9];
    cands.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    cands.push(sorted[sorted.len() - 1] + 1e-9);
    let acc = |t: f64| ratios.iter().zip(los).filter(|(r, l)| (**r >= t) == **l).count() as f64 / los.len() as f64;
    let mut best = (cands[0], acc(cands[0]));
    for &t in &cands[1..] {
        let a = acc(t);
        if a > best.1 {
            best = (t, a);
        }
    }
    best
}

fn estimates(out: &[RangingOutput]) -> Vec<f64> {
    out.iter().map(|o| o.d_hat).collect()
}

pub fn fit_baselines(samples: &[CalibrationSample]) -> Result<(CalibrationParams, FitReport), TrainingError> {
    if samples.len() < 3 {
        return Err(TrainingError::Input(format!("{} calibration samples, need at least 3", samples.len())));
    }
    if !samples.iter().all(|s| s.distance > 0.0 && s.distance.is_finite()) {
        return Err(TrainingError::Input("calibration distances must be positive".into()));
    }
    let rss: Vec<f64> = samples.iter().map(|s| s.input.mean_rss()).collect();
    let dist: Vec<f64> = samples.iter().map(|s| s.distance).collect();
    let unit = LinearStd { slope: 0.0, intercept: 1.0 };

    let (rss_d0, eta) = fit_pathloss(&rss, &dist);
    let mut pathloss = PathLossParams { rss_d0, eta, std: unit };
    let (g2, g1, g0) = fit_polynomial(&rss, &dist)?;
    let mut polynomial = PolynomialParams { g2, g1, g0, std: unit };

    let has_csi = samples.iter().all(|s| !s.input.csi_complex.is_empty());
    let mut cupid = CupidParams { rss_d0, eta_los: eta, eta_nlos: eta, std: unit, ..CupidParams::default() };
    let mut cupid_accuracy = f64::NAN;
    if has_csi {
        let ratios: Vec<f64> = samples.iter().map(|s| edp_ratio(&s.input.csi_complex)).collect();
        let los: Vec<bool> = samples.iter().map(|s| s.los).collect();
        let (threshold, acc) = fit_threshold(&ratios, &los);
        cupid.edp_ratio_threshold = threshold;
        cupid_accuracy = acc;
        for want in [true, false] {
            let (r, d): (Vec<f64>, Vec<f64>) =
                samples.iter().zip(&rss).filter(|(s, _)| s.los == want).map(|(s, r)| (*r, s.distance)).unzip();
            if r.is_empty() {
                continue;
            }
            let e = minimise_eta(|eta| pathloss_nmse(&r, &d, rss_d0, eta));
            if want { cupid.eta_los = e } else { cupid.eta_nlos = e }
        }
    }

    let pl: Vec<RangingOutput> = samples.iter().map(|s| pathloss_range(&s.input, &pathloss)).collect::<Result<_, _>>()?;
    let po: Vec<RangingOutput> =
        samples.iter().map(|s| polynomial_range(&s.input, &polynomial)).collect::<Result<_, _>>()?;
    pathloss.std = fit_std(&estimates(&pl), &dist);
    polynomial.std = fit_std(&estimates(&po), &dist);
    let mut nmse_cupid = f64::NAN;
    if has_csi {
        let cu: Vec<RangingOutput> = samples.iter().map(|s| cupid_range(&s.input, &cupid)).collect::<Result<_, _>>()?;
        cupid.std = fit_std(&estimates(&cu), &dist);
        nmse_cupid = nmse(estimates(&cu).into_iter(), &dist);
    } else {
        cupid.std = pathloss.std;
    }

    let params = CalibrationParams { pathloss, polynomial, cupid };
    params.validate()?;
    let report = FitReport {
        samples: samples.len(),
        nmse_pathloss: pathloss_nmse(&rss, &dist, rss_d0, eta),
        nmse_polynomial: nmse(rss.iter().map(|r| polynomial.eval(*r)), &dist),
        nmse_cupid,
        cupid_accuracy,
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_pathloss_data_is_recovered() {
        let dist: Vec<f64> = (1..=60).map(|i| 0.5 * i as f64).collect();
        let rss: Vec<f64> = dist.iter().map(|d| -25.8 - 39.0 * d.log10()).collect();
        let (r0, eta) = fit_pathloss(&rss, &dist);
        assert!((r0 + 25.8).abs() < 1e-6 && (eta - 3.9).abs() < 1e-6, "{r0} {eta}");
    }

    #[test]
    fn exact_quadratic_is_recovered() {
        let rss: Vec<f64> = (0..40).map(|i| -30.0 - 1.5 * i as f64).collect();
        let dist: Vec<f64> = rss.iter().map(|r| 0.004 * r * r + 0.1 * r + 1.0).collect();
        let (g2, g1, g0) = fit_polynomial(&rss, &dist).unwrap();
        assert!((g2 - 0.004).abs() < 1e-9 && (g1 - 0.1).abs() < 1e-7 && (g0 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rising_quadratic_is_pinned_at_the_domain_end() {
        // vertex at −50 dBm: the free fit rises over part of the domain
        let rss: Vec<f64> = (0..60).map(|i| -85.0 + i as f64).collect();
        let dist: Vec<f64> = rss.iter().map(|r| 0.01 * (r + 50.0) * (r + 50.0) + 2.0).collect();
        let (g2, g1, _) = fit_polynomial(&rss, &dist).unwrap();
        for r in [RSS_DOMAIN.0, RSS_DOMAIN.1] {
            assert!(2.0 * g2 * r + g1 <= 1e-9);
        }
    }

    #[test]
    fn threshold_separates_classes() {
        let r = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let l = [false, false, false, true, true, true];
        let (t, acc) = fit_threshold(&r, &l);
        assert_eq!(acc, 1.0);
        assert!(t > 0.3 && t < 0.7);
    }

    #[test]
    fn refinement_never_loses_to_the_grid() {
        let f = |x: f64| (x - 2.345_678).powi(2);
        let e = minimise_eta(f);
        assert!(f(e) <= f(2.35));
        assert!((e - 2.345_678).abs() < 1e-6);
    }
}
