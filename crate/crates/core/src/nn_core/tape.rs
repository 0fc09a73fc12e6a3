//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation on a [`Var`] appends a node to its [`Tape`]; nodes are
//! therefore stored in topological order and a single reverse sweep in
//! [`Tape::backward`] produces the gradient of a scalar root with respect to
//! every leaf. Nodes that do not depend on a trainable leaf are marked as
//! constants and skipped during the sweep.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::tensor::{broadcast_shape, for_each_broadcast, Tensor};
use super::NnError;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Atan2(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Sqrt(usize),
    Square(usize),
    Exp(usize),
    Ln(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Inverse(usize),
    Sum(usize),
    SumAxis(usize),
    Concat(Vec<usize>, usize),
    Reshape(usize),
    Gather(usize, Vec<usize>),
    Conv2d(usize, usize),
    MaxPool(usize, Vec<usize>),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("shape", &self.shape()).finish()
    }
}

/// Gradients of a scalar root with respect to the tape's trainable leaves.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` if it does not influence the root.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient for `var`, with zeros when it does not influence the root.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&var.shape()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A trainable leaf: gradients are reported for it.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf: no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, needs_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Reverse sweep from a one-element root. A tape supports one sweep.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients, NnError> {
        if !std::ptr::eq(root.tape, self) {
            return Err(NnError::Shape("root belongs to a different tape".into()));
        }
        if self.consumed.replace(true) {
            return Err(NnError::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.len() != 1 {
            return Err(NnError::Shape(format!(
                "backward root must be scalar, got shape {:?}",
                nodes[root.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), 1.0));

        for id in (0..=root.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            backprop(&nodes, id, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn backprop(nodes: &[Node], id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    let needs = |i: usize| nodes[i].needs_grad;
    let gd = g.data();

    match &nodes[id].op {
        Op::Leaf => {}
        &Op::Add(a, b) | &Op::Sub(a, b) | &Op::Mul(a, b) | &Op::Div(a, b) | &Op::Atan2(a, b) => {
            let (av, bv) = (val(a), val(b));
            let (ad, bd) = (av.data(), bv.data());
            let mut ga = vec![0.0; av.len()];
            let mut gb = vec![0.0; bv.len()];
            let op = &nodes[id].op;
            for_each_broadcast(av.shape(), bv.shape(), out.shape(), |o, ia, ib| {
                let (x, y, go) = (ad[ia], bd[ib], gd[o]);
                let (da, db) = match op {
                    Op::Add(..) => (1.0, 1.0),
                    Op::Sub(..) => (1.0, -1.0),
                    Op::Mul(..) => (y, x),
                    Op::Div(..) => (1.0 / y, -x / (y * y)),
                    // atan2(a = y-coordinate, b = x-coordinate)
                    _ => {
                        let r2 = x * x + y * y;
                        (y / r2, -x / r2)
                    }
                };
                ga[ia] += go * da;
                gb[ib] += go * db;
            });
            if needs(a) {
                accumulate(grads, a, Tensor::from_parts(av.shape().to_vec(), ga));
            }
            if needs(b) {
                accumulate(grads, b, Tensor::from_parts(bv.shape().to_vec(), gb));
            }
        }
        &Op::Neg(a) => accumulate(grads, a, g.map(|v| -v)),
        &Op::Scale(a, c) => accumulate(grads, a, g.map(|v| v * c)),
        &Op::AddScalar(a) | &Op::Reshape(a) => {
            accumulate(grads, a, Tensor::from_parts(val(a).shape().to_vec(), gd.to_vec()))
        }
        &Op::Relu(a) | &Op::Sigmoid(a) | &Op::Sqrt(a) | &Op::Square(a) | &Op::Exp(a) | &Op::Ln(a) => {
            let x = val(a).data();
            let y = out.data();
            let op = &nodes[id].op;
            let data = (0..gd.len())
                .map(|i| {
                    gd[i]
                        * match op {
                            Op::Relu(_) => (x[i] > 0.0) as u8 as f64,
                            Op::Sigmoid(_) => y[i] * (1.0 - y[i]),
                            Op::Sqrt(_) => 0.5 / y[i],
                            Op::Square(_) => 2.0 * x[i],
                            Op::Exp(_) => y[i],
                            _ => 1.0 / x[i],
                        }
                })
                .collect();
            accumulate(grads, a, Tensor::from_parts(val(a).shape().to_vec(), data));
        }
        &Op::MatMul(a, b) => {
            let (av, bv) = (val(a), val(b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if needs(a) {
                // dA = G · Bᵀ
                let mut ga = vec![0.0; m * k];
                kernels::gemm(m, n, k, gd, (n, 1), bv.data(), (1, n), 0.0, &mut ga);
                accumulate(grads, a, Tensor::from_parts(vec![m, k], ga));
            }
            if needs(b) {
                // dB = Aᵀ · G
                let mut gb = vec![0.0; k * n];
                kernels::gemm(k, m, n, av.data(), (1, k), gd, (n, 1), 0.0, &mut gb);
                accumulate(grads, b, Tensor::from_parts(vec![k, n], gb));
            }
        }
        &Op::Transpose(a) => accumulate(grads, a, transpose(g)),
        &Op::Inverse(a) => {
            // dA = -Yᵀ G Yᵀ with Y = A⁻¹
            let n = out.shape()[0];
            let y = out.data();
            let mut tmp = vec![0.0; n * n];
            kernels::gemm(n, n, n, y, (1, n), gd, (n, 1), 0.0, &mut tmp);
            let mut ga = vec![0.0; n * n];
            kernels::gemm(n, n, n, &tmp, (n, 1), y, (1, n), 0.0, &mut ga);
            ga.iter_mut().for_each(|v| *v = -*v);
            accumulate(grads, a, Tensor::from_parts(vec![n, n], ga));
        }
        &Op::Sum(a) => accumulate(grads, a, Tensor::full(val(a).shape(), g.item())),
        &Op::SumAxis(a) => {
            let shape = val(a).shape().to_vec();
            let mut ga = vec![0.0; val(a).len()];
            for_each_broadcast(g.shape(), &[1], &shape, |o, ig, _| ga[o] += gd[ig]);
            accumulate(grads, a, Tensor::from_parts(shape, ga));
        }
        Op::Concat(inputs, axis) => {
            let axis = *axis;
            let outer: usize = out.shape()[..axis].iter().product();
            let inner: usize = out.shape()[axis + 1..].iter().product();
            let total = out.shape()[axis];
            let mut start = 0;
            for &inp in inputs {
                let shape = val(inp).shape().to_vec();
                let width = shape[axis];
                if needs(inp) {
                    let mut gi = Vec::with_capacity(val(inp).len());
                    for o in 0..outer {
                        let base = (o * total + start) * inner;
                        gi.extend_from_slice(&gd[base..base + width * inner]);
                    }
                    accumulate(grads, inp, Tensor::from_parts(shape, gi));
                }
                start += width;
            }
        }
        Op::Gather(a, indices) => {
            let mut ga = vec![0.0; val(*a).len()];
            for (i, &src) in indices.iter().enumerate() {
                ga[src] += gd[i];
            }
            accumulate(grads, *a, Tensor::from_parts(val(*a).shape().to_vec(), ga));
        }
        &Op::Conv2d(x, w) => {
            let (xv, wv) = (val(x), val(w));
            let geom = conv_geom(xv.shape(), wv.shape());
            let g_mat = kernels::batch_major_to_filters_major(gd, &geom);
            let (f, p, cols) = (geom.filters, geom.patch(), geom.columns());
            if needs(w) {
                let col_mat = kernels::im2col(xv.data(), &geom);
                let mut gw = vec![0.0; f * p];
                kernels::gemm(f, cols, p, &g_mat, (cols, 1), &col_mat, (1, cols), 0.0, &mut gw);
                accumulate(grads, w, Tensor::from_parts(wv.shape().to_vec(), gw));
            }
            if needs(x) {
                let mut gcols = vec![0.0; p * cols];
                kernels::gemm(p, f, cols, wv.data(), (1, p), &g_mat, (cols, 1), 0.0, &mut gcols);
                let mut gx = vec![0.0; xv.len()];
                kernels::col2im(&gcols, &geom, &mut gx);
                accumulate(grads, x, Tensor::from_parts(xv.shape().to_vec(), gx));
            }
        }
        Op::MaxPool(a, argmax) => {
            let mut ga = vec![0.0; val(*a).len()];
            for (i, &src) in argmax.iter().enumerate() {
                ga[src] += gd[i];
            }
            accumulate(grads, *a, Tensor::from_parts(val(*a).shape().to_vec(), ga));
        }
    }
}

fn transpose(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let d = t.data();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::from_parts(vec![c, r], out)
}

fn conv_geom(x: &[usize], w: &[usize]) -> ConvGeom {
    ConvGeom {
        batch: x[0],
        channels: x[1],
        height: x[2],
        width: x[3],
        filters: w[0],
        kh: w[2],
        kw: w[3],
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a one-element variable.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn record(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'t> {
        let needs = inputs.iter().any(|&i| self.tape.needs(i));
        self.tape.push(value, op, needs)
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<(), NnError> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(NnError::Shape("operands recorded on different tapes".into()))
        }
    }

    fn binary(
        self,
        other: Var<'t>,
        f: impl Fn(f64, f64) -> f64,
        op: fn(usize, usize) -> Op,
        name: &str,
    ) -> Result<Var<'t>, NnError> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        let shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
            NnError::Shape(format!("{name}: cannot broadcast {:?} with {:?}", a.shape(), b.shape()))
        })?;
        let mut data = vec![0.0; shape.iter().product()];
        let (ad, bd) = (a.data(), b.data());
        for_each_broadcast(a.shape(), b.shape(), &shape, |o, ia, ib| data[o] = f(ad[ia], bd[ib]));
        Ok(self.record(Tensor::from_parts(shape, data), op(self.id, other.id), &[self.id, other.id]))
    }

    /// Elementwise sum with broadcasting.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, NnError> {
        self.binary(other, |x, y| x + y, Op::Add, "add")
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, NnError> {
        self.binary(other, |x, y| x - y, Op::Sub, "sub")
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, NnError> {
        self.binary(other, |x, y| x * y, Op::Mul, "mul")
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>, NnError> {
        self.binary(other, |x, y| x / y, Op::Div, "div")
    }

    /// Four-quadrant `atan2(self, x)` with `self` as the y-coordinate.
    pub fn atan2(self, x: Var<'t>) -> Result<Var<'t>, NnError> {
        self.binary(x, f64::atan2, Op::Atan2, "atan2")
    }

    fn unary(self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let v = self.value().map(f);
        self.record(v, op, &[self.id])
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(|x| -x, Op::Neg(self.id))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(|x| x * c, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(|x| x + c, Op::AddScalar(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(
            |x| {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            },
            Op::Sigmoid(self.id),
        )
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(f64::sqrt, Op::Sqrt(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(|x| x * x, Op::Square(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(f64::exp, Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(f64::ln, Op::Ln(self.id))
    }

    /// 2-D matrix product `[m, k] × [k, n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, NnError> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(NnError::Shape(format!("matmul: {:?} × {:?}", a.shape(), b.shape())));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut c = vec![0.0; m * n];
        kernels::gemm(m, k, n, a.data(), (k, 1), b.data(), (n, 1), 0.0, &mut c);
        Ok(self.record(
            Tensor::from_parts(vec![m, n], c),
            Op::MatMul(self.id, other.id),
            &[self.id, other.id],
        ))
    }

    pub fn transpose(self) -> Result<Var<'t>, NnError> {
        let a = self.value();
        if a.shape().len() != 2 {
            return Err(NnError::Shape(format!("transpose needs a matrix, got {:?}", a.shape())));
        }
        Ok(self.record(transpose(&a), Op::Transpose(self.id), &[self.id]))
    }

    /// Inverse of a small square matrix.
    pub fn inverse(self) -> Result<Var<'t>, NnError> {
        let a = self.value();
        let s = a.shape();
        if s.len() != 2 || s[0] != s[1] {
            return Err(NnError::Shape(format!("inverse needs a square matrix, got {s:?}")));
        }
        let inv = kernels::invert(a.data(), s[0])?;
        Ok(self.record(Tensor::from_parts(s.to_vec(), inv), Op::Inverse(self.id), &[self.id]))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(self) -> Var<'t> {
        let s = self.value().sum();
        self.record(Tensor::scalar(s), Op::Sum(self.id), &[self.id])
    }

    /// Sum along `axis`, keeping it with size 1.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>, NnError> {
        let a = self.value();
        let shape = a.shape();
        if axis >= shape.len() {
            return Err(NnError::Shape(format!("sum_axis: axis {axis} for shape {shape:?}")));
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = 1;
        let mut out = vec![0.0; out_shape.iter().product()];
        let ad = a.data();
        for_each_broadcast(&out_shape, &[1], shape, |o, io, _| out[io] += ad[o]);
        Ok(self.record(Tensor::from_parts(out_shape, out), Op::SumAxis(self.id), &[self.id]))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, NnError> {
        let t = self.value().reshaped(shape)?;
        Ok(self.record(t, Op::Reshape(self.id), &[self.id]))
    }

    /// Picks flat elements `indices` into a tensor of `shape`.
    pub fn gather(self, indices: &[usize], shape: &[usize]) -> Result<Var<'t>, NnError> {
        let a = self.value();
        if shape.iter().product::<usize>() != indices.len() {
            return Err(NnError::Shape(format!(
                "gather: {} indices for shape {shape:?}",
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.len()) {
            return Err(NnError::Shape(format!("gather: index {bad} out of {}", a.len())));
        }
        let data = indices.iter().map(|&i| a.data()[i]).collect();
        Ok(self.record(
            Tensor::from_parts(shape.to_vec(), data),
            Op::Gather(self.id, indices.to_vec()),
            &[self.id],
        ))
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, NnError> {
        let first = parts.first().ok_or_else(|| NnError::Shape("concat of nothing".into()))?;
        let values: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(NnError::Shape(format!("concat: axis {axis} for shape {base:?}")));
        }
        let mut total = 0;
        for (p, v) in parts.iter().zip(&values) {
            first.same_tape(p)?;
            let s = v.shape();
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(NnError::Shape(format!("concat: {:?} vs {:?} on axis {axis}", s, base)));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &values {
                let w = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.record(Tensor::from_parts(shape, data), Op::Concat(ids.clone(), axis), &ids))
    }

    /// Valid, stride-1 2-D convolution: `[N, C, H, W]` ⊛ `[F, C, KH, KW]`.
    pub fn conv2d(self, kernel: Var<'t>) -> Result<Var<'t>, NnError> {
        self.same_tape(&kernel)?;
        let (x, w) = (self.value(), kernel.value());
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || ws[2] > xs[2] || ws[3] > xs[3] {
            return Err(NnError::Shape(format!("conv2d: input {xs:?} with kernel {ws:?}")));
        }
        let geom = conv_geom(xs, ws);
        let cols = kernels::im2col(x.data(), &geom);
        let (f, p, ncols) = (geom.filters, geom.patch(), geom.columns());
        let mut out = vec![0.0; f * ncols];
        kernels::gemm(f, p, ncols, w.data(), (p, 1), &cols, (ncols, 1), 0.0, &mut out);
        let data = kernels::filters_major_to_batch_major(&out, &geom);
        let shape = vec![geom.batch, f, geom.out_h(), geom.out_w()];
        Ok(self.record(
            Tensor::from_parts(shape, data),
            Op::Conv2d(self.id, kernel.id),
            &[self.id, kernel.id],
        ))
    }

    /// 1-D convolution `[N, C, W]` ⊛ `[F, C, K]`, expressed as a 2-D one.
    pub fn conv1d(self, kernel: Var<'t>) -> Result<Var<'t>, NnError> {
        let (xs, ws) = (self.shape(), kernel.shape());
        if xs.len() != 3 || ws.len() != 3 {
            return Err(NnError::Shape(format!("conv1d: input {xs:?} with kernel {ws:?}")));
        }
        let x4 = self.reshape(&[xs[0], xs[1], 1, xs[2]])?;
        let w4 = kernel.reshape(&[ws[0], ws[1], 1, ws[2]])?;
        let y = x4.conv2d(w4)?;
        let ys = y.shape();
        y.reshape(&[ys[0], ys[1], ys[3]])
    }

    /// Non-overlapping max-pooling of width `window` along the last axis.
    /// Trailing elements that do not fill a window are dropped.
    pub fn maxpool_last(self, window: usize) -> Result<Var<'t>, NnError> {
        let a = self.value();
        let shape = a.shape();
        let width = *shape.last().ok_or_else(|| NnError::Shape("maxpool on scalar".into()))?;
        if window == 0 || window > width {
            return Err(NnError::Shape(format!("maxpool window {window} for width {width}")));
        }
        let out_w = width / window;
        let rows = a.len() / width;
        let mut data = Vec::with_capacity(rows * out_w);
        let mut argmax = Vec::with_capacity(rows * out_w);
        let ad = a.data();
        for r in 0..rows {
            for o in 0..out_w {
                let start = r * width + o * window;
                let best = (start..start + window)
                    .reduce(|i, j| if ad[j] > ad[i] { j } else { i })
                    .expect("window is non-empty");
                data.push(ad[best]);
                argmax.push(best);
            }
        }
        let mut out_shape = shape.to_vec();
        *out_shape.last_mut().expect("non-empty shape") = out_w;
        Ok(self.record(
            Tensor::from_parts(out_shape, data),
            Op::MaxPool(self.id, argmax),
            &[self.id],
        ))
    }
}
