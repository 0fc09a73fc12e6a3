//! Closed-form rigid alignment of a PDR track onto a Wi-Fi track.

use super::TrainingError;
use crate::channel_sim::Point;
use crate::nn_core::{NnError, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentResult {
    pub phi_star: f64,
    pub omega_star: Point,
    /// Σ‖ẑ_k − R(φ*)p_k − Ω*‖².
    pub cost: f64,
    pub gamma: f64,
    pub gamma_tilde: f64,
}

/// R(φ)·p.
pub fn rotate(phi: f64, p: Point) -> Point {
    let (s, c) = phi.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Σ‖z_k − R(φ)p_k − Ω‖² evaluated directly.
pub fn residual(z: &[Point], p: &[Point], phi: f64, omega: Point) -> f64 {
    z.iter()
        .zip(p)
        .map(|(z, p)| {
            let q = rotate(phi, *p);
            (z[0] - q[0] - omega[0]).powi(2) + (z[1] - q[1] - omega[1]).powi(2)
        })
        .sum()
}

/// Ω(φ) = (Σz − R(φ)Σp)/K.
pub fn best_offset(z: &[Point], p: &[Point], phi: f64) -> Point {
    let k = z.len() as f64;
    let sz = sum(z);
    let sp = rotate(phi, sum(p));
    [(sz[0] - sp[0]) / k, (sz[1] - sp[1]) / k]
}

fn sum(v: &[Point]) -> Point {
    v.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]])
}

/// Σ‖z̃‖² + Σ‖p̃‖² of the centred tracks, the natural size of the problem.
pub fn trajectory_scale(z: &[Point], p: &[Point]) -> f64 {
    let spread = |v: &[Point]| {
        let c = sum(v);
        let k = v.len() as f64;
        v.iter().map(|q| (q[0] - c[0] / k).powi(2) + (q[1] - c[1] / k).powi(2)).sum::<f64>()
    };
    spread(z) + spread(p)
}

/// Rotation and offset minimising Σ‖z_k − R(φ)p_k − Ω‖².
///
/// With Γ = (Σz)ᵀ(Σp)/K − Σzᵀp and Γ̃ the same with Ĩ₂ between the factors,
/// the φ-dependent part of the cost is Γcos φ + Γ̃ sin φ, minimised at
/// φ* = atan2(−Γ̃, −Γ). Everything is computed on centred tracks. A PDR track
/// that never moves gives Γ = Γ̃ = 0 and φ* = 0.
pub fn optimal_transform(z: &[Point], p: &[Point]) -> Result<AlignmentResult, TrainingError> {
    if z.len() != p.len() || z.len() < 2 {
        return Err(TrainingError::Input(format!("alignment needs two equal tracks, got {} and {}", z.len(), p.len())));
    }
    if !z.iter().chain(p).all(|q| q[0].is_finite() && q[1].is_finite()) {
        return Err(TrainingError::NonFinite("trajectory".into()));
    }
    let k = z.len() as f64;
    let (cz, cp) = (sum(z), sum(p));
    let (mz, mp) = ([cz[0] / k, cz[1] / k], [cp[0] / k, cp[1] / k]);
    let (mut dot, mut cross, mut zz, mut pp) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in z.iter().zip(p) {
        let (zx, zy) = (a[0] - mz[0], a[1] - mz[1]);
        let (px, py) = (b[0] - mp[0], b[1] - mp[1]);
        dot += zx * px + zy * py;
        // zᵀ Ĩ₂ p with Ĩ₂ = [[0, −1], [1, 0]]
        cross += zy * px - zx * py;
        zz += zx * zx + zy * zy;
        pp += px * px + py * py;
    }
    let (gamma, gamma_tilde) = (-dot, -cross);
    let phi_star = if gamma == 0.0 && gamma_tilde == 0.0 { 0.0 } else { (-gamma_tilde).atan2(-gamma) };
    let omega_star = best_offset(z, p, phi_star);
    let cost = (zz + pp - 2.0 * gamma.hypot(gamma_tilde)).max(0.0);
    Ok(AlignmentResult { phi_star, omega_star, cost, gamma, gamma_tilde })
}

pub fn sensor_cost(z: &[Point], p: &[Point]) -> Result<f64, TrainingError> {
    Ok(optimal_transform(z, p)?.cost)
}

/// Sensor cost of a `[K, 2]` tape trajectory.
///
/// φ* and Ω* are stationary points of the cost, so they enter as constants:
/// the gradient with respect to `z` is that of the residual at fixed (φ*, Ω*).
pub fn sensor_cost_tape<'t>(z: Var<'t>, p: &[Point]) -> Result<Var<'t>, TrainingError> {
    let zv = z.value();
    let pts: Vec<Point> = zv.data().chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let a = optimal_transform(&pts, p)?;
    let target: Vec<f64> = p
        .iter()
        .flat_map(|q| {
            let r = rotate(a.phi_star, *q);
            [r[0] + a.omega_star[0], r[1] + a.omega_star[1]]
        })
        .collect();
    let target = z.tape().constant(Tensor::new(vec![p.len(), 2], target).map_err(TrainingError::from)?);
    Ok(z.sub(target)?.square().sum())
}

impl From<NnError> for TrainingError {
    fn from(e: NnError) -> Self {
        TrainingError::Nn(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_tracks_cost_nothing() {
        let z = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]];
        let a = optimal_transform(&z, &z).unwrap();
        assert!(a.cost < 1e-12);
        assert!(a.phi_star.sin().abs() < 1e-12 && a.phi_star.cos() > 0.0);
    }

    #[test]
    fn stationary_pdr_is_degenerate_but_defined() {
        let z = [[0.0, 0.0], [1.0, 0.0], [1.0, 2.0]];
        let p = [[5.0, 5.0]; 3];
        let a = optimal_transform(&z, &p).unwrap();
        assert_eq!(a.phi_star, 0.0);
        assert!((a.cost - residual(&z, &p, 0.0, a.omega_star)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_fail() {
        assert!(optimal_transform(&[[0.0, 0.0]; 3], &[[0.0, 0.0]; 2]).is_err());
        assert!(optimal_transform(&[[f64::NAN, 0.0]; 2], &[[0.0, 0.0]; 2]).is_err());
    }
}
