//! Autodiff gradients against central finite differences, primitive by primitive.

use beaconloc::nn_core::gradcheck::check;
use beaconloc::nn_core::{NnError, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const TOL_INVERSE: f64 = 1e-3;

fn random(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Random weights for a scalar reduction so every output element matters.
fn weighted_sum<'t>(tape: &'t Tape, v: Var<'t>, seed: u64) -> Result<Var<'t>, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&v.shape(), &mut rng, -1.0, 1.0);
    Ok(v.mul(tape.constant(w))?.sum())
}

fn assert_grad<F>(name: &str, f: F, inputs: &[Tensor], tol: f64)
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, NnError>,
{
    let r = check(f, inputs, H).unwrap();
    assert!(r.max_rel_err <= tol, "{name}: rel err {:.3e} at {:?} (ad {} vs fd {})", r.max_rel_err, r.worst, r.analytic, r.numeric);
}

#[test]
fn elementwise_binary_ops_with_broadcasting() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 4], &mut rng, 0.5, 2.0);
    let b = random(&[1, 4], &mut rng, 0.5, 2.0);
    let ins = [a, b];
    assert_grad("add", |t, v| weighted_sum(t, v[0].add(v[1])?, 2), &ins, TOL);
    assert_grad("sub", |t, v| weighted_sum(t, v[0].sub(v[1])?, 3), &ins, TOL);
    assert_grad("mul", |t, v| weighted_sum(t, v[0].mul(v[1])?, 4), &ins, TOL);
    assert_grad("div", |t, v| weighted_sum(t, v[0].div(v[1])?, 5), &ins, TOL);
    let y = random(&[5], &mut rng, -2.0, 2.0);
    let x = random(&[5], &mut rng, -2.0, 2.0);
    assert_grad("atan2", |t, v| weighted_sum(t, v[0].atan2(v[1])?, 6), &[y, x], TOL);
}

#[test]
fn elementwise_unary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pos = random(&[2, 5], &mut rng, 0.2, 3.0);
    let any = random(&[2, 5], &mut rng, -3.0, 3.0);
    assert_grad("relu", |t, v| weighted_sum(t, v[0].relu(), 8), &[any.clone()], TOL);
    assert_grad("sigmoid", |t, v| weighted_sum(t, v[0].sigmoid(), 9), &[any.clone()], TOL);
    assert_grad("sqrt", |t, v| weighted_sum(t, v[0].sqrt(), 10), &[pos.clone()], TOL);
    assert_grad("square", |t, v| weighted_sum(t, v[0].square(), 11), &[any.clone()], TOL);
    assert_grad("exp", |t, v| weighted_sum(t, v[0].exp(), 12), &[any.clone()], TOL);
    assert_grad("ln", |t, v| weighted_sum(t, v[0].ln(), 13), &[pos], TOL);
    assert_grad("neg/scale/add_scalar", |t, v| weighted_sum(t, v[0].neg().scale(2.5).add_scalar(1.0), 14), &[any], TOL);
}

#[test]
fn matrix_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let a = random(&[3, 4], &mut rng, -1.0, 1.0);
    let b = random(&[4, 2], &mut rng, -1.0, 1.0);
    assert_grad("matmul", |t, v| weighted_sum(t, v[0].matmul(v[1])?, 16), &[a.clone(), b], TOL);
    assert_grad("transpose", |t, v| weighted_sum(t, v[0].transpose()?, 17), &[a], TOL);
    // well-conditioned SPD-ish matrix
    let m = Tensor::matrix(3, 3, &[4.0, 1.0, 0.5, 0.3, 3.0, 0.2, 0.1, 0.7, 2.0]).unwrap();
    assert_grad("inverse", |t, v| weighted_sum(t, v[0].inverse()?, 18), &[m], TOL_INVERSE);
}

#[test]
fn reductions_and_shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let a = random(&[2, 3, 4], &mut rng, -1.0, 1.0);
    let b = random(&[2, 2, 4], &mut rng, -1.0, 1.0);
    assert_grad("sum", |_, v| Ok(v[0].square().sum()), &[a.clone()], TOL);
    for axis in 0..3 {
        assert_grad("sum_axis", move |t, v| weighted_sum(t, v[0].sum_axis(axis)?.square(), 20), &[a.clone()], TOL);
    }
    assert_grad("concat", |t, v| weighted_sum(t, Var::concat(&[v[0], v[1]], 1)?, 21), &[a.clone(), b], TOL);
    assert_grad("reshape", |t, v| weighted_sum(t, v[0].reshape(&[6, 4])?, 22), &[a.clone()], TOL);
    assert_grad("gather", |t, v| weighted_sum(t, v[0].gather(&[0, 5, 5, 23, 7], &[5])?, 23), &[a], TOL);
}

#[test]
fn convolution_and_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = random(&[2, 2, 3, 9], &mut rng, -1.0, 1.0);
    let w = random(&[3, 2, 3, 4], &mut rng, -1.0, 1.0);
    assert_grad("conv2d", |t, v| weighted_sum(t, v[0].conv2d(v[1])?, 25), &[x, w], TOL);
    let x1 = random(&[2, 3, 10], &mut rng, -1.0, 1.0);
    let w1 = random(&[2, 3, 4], &mut rng, -1.0, 1.0);
    assert_grad("conv1d", |t, v| weighted_sum(t, v[0].conv1d(v[1])?, 26), &[x1, w1], TOL);
    let p = random(&[2, 3, 7], &mut rng, -1.0, 1.0);
    assert_grad("maxpool", |t, v| weighted_sum(t, v[0].maxpool_last(2)?, 27), &[p], TOL);
}

fn mixed_graph<'t>(t: &'t Tape, v: &[Var<'t>]) -> Result<Var<'t>, NnError> {
    let h = v[0].matmul(v[1])?.add(v[2])?.sigmoid();
    let g = h.mul(v[0])?.sqrt().atan2(v[2].add_scalar(0.5))?;
    let s = v[1].matmul(v[1].transpose()?)?.add(t.constant(Tensor::eye(3)))?.inverse()?;
    let m = g.matmul(s)?;
    let cat = Var::concat(&[m, h.relu()], 0)?;
    Ok(cat.sum_axis(1)?.square().sum())
}

#[test]
fn random_graph_mixing_primitives() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let x = random(&[2, 3], &mut rng, 0.3, 1.5);
    let w = random(&[3, 3], &mut rng, -1.0, 1.0);
    let c = random(&[3], &mut rng, 0.3, 1.0);
    assert_grad("mixed", mixed_graph, &[x, w, c], TOL_INVERSE);
}

#[test]
fn replay_is_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x = random(&[4, 2, 2, 12], &mut rng, -1.0, 1.0);
        let w = random(&[5, 2, 2, 4], &mut rng, -1.0, 1.0);
        let tape = Tape::new();
        let (xv, wv) = (tape.param(x), tape.param(w));
        let y = xv.conv2d(wv).unwrap().relu().maxpool_last(2).unwrap().square().sum();
        let g = tape.backward(y).unwrap();
        (g.get(xv).unwrap().clone(), g.get(wv).unwrap().clone())
    };
    assert_eq!(run(), run());
}
