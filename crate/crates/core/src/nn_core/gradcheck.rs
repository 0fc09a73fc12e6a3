//! Central finite-difference oracle for tape gradients.

use super::{NnError, Tape, Tensor, Var};

/// Outcome of comparing autodiff against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Largest elementwise relative error over all inputs.
    pub max_rel_err: f64,
    /// Input index and flat element where it occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Relative error with a floor that keeps near-zero gradients meaningful.
///
/// The floor is `1e-6 · max(1, |largest numeric gradient|)`, so elements that
/// are many orders of magnitude below the gradient's scale are judged in
/// absolute terms.
pub fn rel_err(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let floor = 1e-6 * scale.max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Evaluates `f` on a fresh tape at `inputs`; `f` must return a scalar.
fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64, NnError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NnError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    Ok(f(&tape, &vars)?.item())
}

/// Compares the tape gradient of `f` with central differences of step `h`.
pub fn check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheck, NnError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NnError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let root = f(&tape, &vars)?;
    let grads = tape.backward(root)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get_or_zeros(*v)).collect();

    let mut numeric: Vec<Vec<f64>> = Vec::with_capacity(inputs.len());
    for (i, t) in inputs.iter().enumerate() {
        let mut col = Vec::with_capacity(t.len());
        for j in 0..t.len() {
            let mut probe = inputs.to_vec();
            let x0 = t.data()[j];
            probe[i].data_mut()[j] = x0 + h;
            let up = eval(&f, &probe)?;
            probe[i].data_mut()[j] = x0 - h;
            let down = eval(&f, &probe)?;
            col.push((up - down) / (2.0 * h));
        }
        numeric.push(col);
    }
    let scale = numeric.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut out = GradCheck { max_rel_err: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0 };
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (j, (&av, &nv)) in a.data().iter().zip(n).enumerate() {
            let e = rel_err(av, nv, scale);
            if e >= out.max_rel_err {
                out = GradCheck { max_rel_err: e, worst: (i, j), analytic: av, numeric: nv };
            }
        }
    }
    Ok(out)
}
