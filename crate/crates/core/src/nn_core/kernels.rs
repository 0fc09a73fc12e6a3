//! Raw numeric kernels shared by the forward and backward passes.

use super::NnError;

/// `c = a · b + beta · c` for row/column-strided operands.
///
/// `a` is `m×k`, `b` is `k×n`, `c` is a contiguous row-major `m×n` buffer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: bounds on all three operands are asserted above and the output
    // buffer does not alias the inputs (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a valid (unpadded, stride-1) 2-D convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.height - self.kh + 1
    }
    pub fn out_w(&self) -> usize {
        self.width - self.kw + 1
    }
    pub fn patch(&self) -> usize {
        self.channels * self.kh * self.kw
    }
    pub fn columns(&self) -> usize {
        self.batch * self.out_h() * self.out_w()
    }
}

/// Unfolds input patches into a `[patch, columns]` matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (ho, wo) = (g.out_h(), g.out_w());
    let cols = g.columns();
    let mut out = vec![0.0; g.patch() * cols];
    for c in 0..g.channels {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let r = (c * g.kh + i) * g.kw + j;
                let row = &mut out[r * cols..(r + 1) * cols];
                for n in 0..g.batch {
                    for oh in 0..ho {
                        let src = ((n * g.channels + c) * g.height + oh + i) * g.width + j;
                        let dst = (n * ho + oh) * wo;
                        row[dst..dst + wo].copy_from_slice(&x[src..src + wo]);
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: accumulates column gradients back into input layout.
pub(crate) fn col2im(cols_grad: &[f64], g: &ConvGeom, x_grad: &mut [f64]) {
    let (ho, wo) = (g.out_h(), g.out_w());
    let cols = g.columns();
    for c in 0..g.channels {
        for i in 0..g.kh {
            for j in 0..g.kw {
                let r = (c * g.kh + i) * g.kw + j;
                let row = &cols_grad[r * cols..(r + 1) * cols];
                for n in 0..g.batch {
                    for oh in 0..ho {
                        let dst = ((n * g.channels + c) * g.height + oh + i) * g.width + j;
                        let src = (n * ho + oh) * wo;
                        for (d, s) in x_grad[dst..dst + wo].iter_mut().zip(&row[src..src + wo]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
}

/// `[F, N·HO·WO]` ⇄ `[N, F, HO, WO]` layout shuffles.
pub(crate) fn filters_major_to_batch_major(m: &[f64], g: &ConvGeom) -> Vec<f64> {
    let hw = g.out_h() * g.out_w();
    let cols = g.columns();
    let mut out = vec![0.0; m.len()];
    for f in 0..g.filters {
        for n in 0..g.batch {
            let src = f * cols + n * hw;
            let dst = (n * g.filters + f) * hw;
            out[dst..dst + hw].copy_from_slice(&m[src..src + hw]);
        }
    }
    out
}

pub(crate) fn batch_major_to_filters_major(t: &[f64], g: &ConvGeom) -> Vec<f64> {
    let hw = g.out_h() * g.out_w();
    let cols = g.columns();
    let mut out = vec![0.0; t.len()];
    for n in 0..g.batch {
        for f in 0..g.filters {
            let src = (n * g.filters + f) * hw;
            let dst = f * cols + n * hw;
            out[dst..dst + hw].copy_from_slice(&t[src..src + hw]);
        }
    }
    out
}

fn norm1(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss–Jordan inverse with partial pivoting.
///
/// Fails with the 1-norm condition estimate when the matrix is numerically
/// singular (reciprocal condition below machine epsilon).
pub(crate) fn invert(a: &[f64], n: usize) -> Result<Vec<f64>, NnError> {
    let anorm = norm1(a, n);
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| m[r * n + col].abs().total_cmp(&m[s * n + col].abs()))
            .expect("non-empty pivot range");
        let p = m[pivot_row * n + col];
        min_pivot = min_pivot.min(p.abs());
        if p == 0.0 || !p.is_finite() {
            return Err(NnError::Singular { condition: f64::INFINITY });
        }
        if pivot_row != col {
            for j in 0..n {
                m.swap(col * n + j, pivot_row * n + j);
                inv.swap(col * n + j, pivot_row * n + j);
            }
        }
        let scale = 1.0 / p;
        for j in 0..n {
            m[col * n + j] *= scale;
            inv[col * n + j] *= scale;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = m[r * n + col];
            if factor != 0.0 {
                for j in 0..n {
                    m[r * n + j] -= factor * m[col * n + j];
                    inv[r * n + j] -= factor * inv[col * n + j];
                }
            }
        }
    }
    let condition = anorm * norm1(&inv, n);
    if !condition.is_finite() || condition * f64::EPSILON >= 1.0 {
        return Err(NnError::Singular { condition });
    }
    Ok(inv)
}
