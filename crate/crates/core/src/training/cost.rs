//! Range-consistency and combined costs of a Wi-Fi trajectory.

use super::align::{sensor_cost, sensor_cost_tape};
use super::TrainingError;
use crate::channel_sim::Point;
use crate::nn_core::{Tensor, Var};
use crate::positioning::EpochMeasurement;

/// Σ_k Σ_n (‖ẑ_k − z_n‖ − d̂_n)².
///
/// Pairs with the estimate within `guard` of the AP are left out, as in the
/// filter update, so the cost stays differentiable.
pub fn geometric_cost(z: &[Point], meas: &[EpochMeasurement], guard: f64) -> Result<f64, TrainingError> {
    if z.len() != meas.len() {
        return Err(TrainingError::Input(format!("{} positions for {} epochs", z.len(), meas.len())));
    }
    let mut cost = 0.0;
    for (p, m) in z.iter().zip(meas) {
        for (a, d) in m.aps.iter().zip(&m.d) {
            let r = (p[0] - a[0]).hypot(p[1] - a[1]);
            if r >= guard {
                cost += (r - d).powi(2);
            }
        }
    }
    if !cost.is_finite() {
        return Err(TrainingError::NonFinite("geometric cost".into()));
    }
    Ok(cost)
}

/// μ₁·J_sen + μ₂·J_geo; a term with zero weight is not evaluated.
pub fn unified_cost(
    z: &[Point],
    p: &[Point],
    meas: &[EpochMeasurement],
    mu1: f64,
    mu2: f64,
    guard: f64,
) -> Result<f64, TrainingError> {
    let sen = if mu1 != 0.0 { mu1 * sensor_cost(z, p)? } else { 0.0 };
    let geo = if mu2 != 0.0 { mu2 * geometric_cost(z, meas, guard)? } else { 0.0 };
    Ok(sen + geo)
}

/// One ranged AP of one epoch, for the tape version of the costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeLink {
    /// Epoch (row of the trajectory).
    pub epoch: usize,
    pub anchor: Point,
}

/// Geometric cost with `z` as a `[K, 2]` tape value and `d` as `[M, 1]`
/// distances, one per link.
pub fn geometric_cost_tape<'t>(
    z: Var<'t>,
    d: Var<'t>,
    links: &[RangeLink],
    guard: f64,
) -> Result<Var<'t>, TrainingError> {
    let tape = z.tape();
    let zv = z.value();
    let keep: Vec<usize> = (0..links.len())
        .filter(|&i| {
            let (k, a) = (links[i].epoch, links[i].anchor);
            let (x, y) = (zv.data()[2 * k], zv.data()[2 * k + 1]);
            (x - a[0]).hypot(y - a[1]) >= guard
        })
        .collect();
    if keep.is_empty() {
        return Ok(z.sum().scale(0.0));
    }
    let m = keep.len();
    let rows: Vec<usize> = keep.iter().flat_map(|&i| [2 * links[i].epoch, 2 * links[i].epoch + 1]).collect();
    let anchors: Vec<f64> = keep.iter().flat_map(|&i| links[i].anchor).collect();
    let zr = z.gather(&rows, &[m, 2])?;
    let r = zr.sub(tape.constant(Tensor::new(vec![m, 2], anchors)?))?.square().sum_axis(1)?.sqrt();
    let d = if m == links.len() { d } else { d.gather(&keep, &[m, 1])? };
    Ok(r.sub(d)?.square().sum())
}

/// Tape version of [`unified_cost`].
pub fn unified_cost_tape<'t>(
    z: Var<'t>,
    d: Var<'t>,
    p: &[Point],
    links: &[RangeLink],
    mu1: f64,
    mu2: f64,
    guard: f64,
) -> Result<Var<'t>, TrainingError> {
    let mut cost = z.sum().scale(0.0);
    if mu1 != 0.0 {
        cost = cost.add(sensor_cost_tape(z, p)?.scale(mu1))?;
    }
    if mu2 != 0.0 {
        cost = cost.add(geometric_cost_tape(z, d, links, guard)?.scale(mu2))?;
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn_core::Tape;

    fn one(ap: Point, d: f64) -> EpochMeasurement {
        EpochMeasurement { aps: vec![ap], d: vec![d], s: vec![1.0] }
    }

    #[test]
    fn three_four_five() {
        assert_eq!(geometric_cost(&[[3.0, 4.0]], &[one([0.0, 0.0], 4.0)], 0.1).unwrap(), 1.0);
        assert_eq!(geometric_cost(&[[3.0, 4.0]], &[one([0.0, 0.0], 5.0)], 0.1).unwrap(), 0.0);
    }

    #[test]
    fn weights_select_terms() {
        let z = [[0.0, 0.0], [1.0, 0.5], [2.0, 3.0]];
        let p = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]];
        let m: Vec<_> = z.iter().map(|_| one([5.0, 5.0], 3.0)).collect();
        let g = geometric_cost(&z, &m, 0.1).unwrap();
        let s = sensor_cost(&z, &p).unwrap();
        assert_eq!(unified_cost(&z, &p, &m, 0.0, 1.0, 0.1).unwrap(), g);
        assert_eq!(unified_cost(&z, &p, &m, 1.0, 0.0, 0.1).unwrap(), s);
        assert!((unified_cost(&z, &p, &m, 1.0, 1.0, 0.1).unwrap() - (g + s)).abs() < 1e-12);
    }

    #[test]
    fn tape_matches_plain() {
        let z = [[0.0, 0.0], [1.0, 0.5], [2.0, 3.0]];
        let p = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]];
        let aps = [[5.0, 5.0], [-1.0, 2.0]];
        let m: Vec<_> = z
            .iter()
            .enumerate()
            .map(|(k, _)| EpochMeasurement { aps: aps.to_vec(), d: vec![3.0 + k as f64, 2.0], s: vec![1.0; 2] })
            .collect();
        let links: Vec<RangeLink> =
            (0..3).flat_map(|k| aps.iter().map(move |&a| RangeLink { epoch: k, anchor: a })).collect();
        let ds: Vec<f64> = m.iter().flat_map(|e| e.d.clone()).collect();
        let tape = Tape::new();
        let zt = tape.param(Tensor::new(vec![3, 2], z.iter().flatten().copied().collect()).unwrap());
        let dt = tape.constant(Tensor::column(&ds));
        let c = unified_cost_tape(zt, dt, &p, &links, 0.5, 2.0, 0.1).unwrap();
        let want = unified_cost(&z, &p, &m, 0.5, 2.0, 0.1).unwrap();
        assert!((c.item() - want).abs() < 1e-12);
    }
}
