use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NnError, ParamSet, Tensor};

/// Adam hyper-parameters. Moment decay rates and epsilon use the usual defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates per parameter plus the step counter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

/// One bias-corrected Adam update.
///
/// Parameters without an entry in `grads` are left untouched (including their
/// moments). The whole step is rejected before any mutation if a gradient is
/// non-finite or mis-shaped.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    for (name, g) in grads.iter() {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(NnError::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.is_finite() {
            return Err(NnError::NonFinite(format!("gradient of `{name}`")));
        }
        if let Some(m) = state.first.get(name) {
            if m.len() != g.len() {
                return Err(NnError::Shape(format!("optimizer state for `{name}`")));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads.iter() {
        let p: &mut Tensor = params.get_mut(name)?;
        let m = state.first.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        let v = state.second.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, data: &[f64]) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(name, Tensor::new(vec![data.len()], data.to_vec()).unwrap());
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = single("w", &[1.0, -2.0]);
        let before = params.clone();
        let mut state = AdamState::default();
        for _ in 0..10 {
            adam_step(&mut params, &single("w", &[0.0, 0.0]), &mut state, &AdamConfig::default()).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut params = single("w", &[0.0, 0.0]);
        let mut state = AdamState::default();
        for _ in 0..100 {
            adam_step(&mut params, &single("w", &[2.0, -0.5]), &mut state, &AdamConfig::default()).unwrap();
        }
        let w = params.get("w").unwrap().data();
        assert!(w[0] < 0.0 && w[1] > 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut params = single("w", &[1.0, -2.0, 0.5]);
        let mut state = AdamState::default();
        let cfg = AdamConfig::default();
        for _ in 0..10_000 {
            let w = params.get("w").unwrap().data().to_vec();
            let g: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
            adam_step(&mut params, &single("w", &g), &mut state, &cfg).unwrap();
        }
        let norm = params.get("w").unwrap().data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "norm {norm}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = single("offset.7", &[0.0]);
        let mut grads = single("offset.7", &[0.0]);
        grads.get_mut("offset.7").unwrap().data_mut()[0] = f64::INFINITY;
        let err = adam_step(&mut params, &grads, &mut AdamState::default(), &AdamConfig::default());
        assert_eq!(err, Err(NnError::NonFinite("gradient of `offset.7`".into())));
        assert_eq!(params.get("offset.7").unwrap().data(), &[0.0]);
    }
}
