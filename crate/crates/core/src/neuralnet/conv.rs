//! Kernel-2 causal dilated convolution.
//!
//! `out[t, o] = bias[o] + Σ_c kernel[0, c, o]·x[t − d, c] + kernel[1, c, o]·x[t, c]`
//! with `x[τ] = 0` for `τ < 0`. Kernels are stored `[2, C_in, C_out]`, output
//! channel fastest.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

/// Borrowed weights of one convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvRef<'a, S> {
    pub kernel: &'a [S],
    pub bias: &'a [S],
    pub c_in: usize,
    pub c_out: usize,
    pub dilation: usize,
}

impl<S: Scalar> ConvRef<'_, S> {
    #[inline]
    fn tap(&self, tap: usize, c: usize) -> &[S] {
        let start = (tap * self.c_in + c) * self.c_out;
        &self.kernel[start..start + self.c_out]
    }

    /// Pre-activation output of one `[steps, C_in]` sample into `out` (`[steps, C_out]`).
    pub fn forward(&self, x: &[S], steps: usize, out: &mut [S]) {
        let (ci, co, d) = (self.c_in, self.c_out, self.dilation);
        for t in 0..steps {
            let row = &mut out[t * co..(t + 1) * co];
            row.copy_from_slice(self.bias);
            let cur = &x[t * ci..(t + 1) * ci];
            for (c, &xv) in cur.iter().enumerate() {
                if xv != S::zero() {
                    axpy(row, xv, self.tap(1, c));
                }
            }
            if t >= d {
                let prev = &x[(t - d) * ci..(t - d + 1) * ci];
                for (c, &xv) in prev.iter().enumerate() {
                    if xv != S::zero() {
                        axpy(row, xv, self.tap(0, c));
                    }
                }
            }
        }
    }

    /// Accumulate kernel/bias gradients and, optionally, the input gradient.
    pub fn backward(
        &self,
        x: &[S],
        steps: usize,
        d_pre: &[S],
        d_kernel: &mut [S],
        d_bias: &mut [S],
        mut d_x: Option<&mut [S]>,
    ) {
        let (ci, co, d) = (self.c_in, self.c_out, self.dilation);
        for t in 0..steps {
            let g = &d_pre[t * co..(t + 1) * co];
            if g.iter().all(|v| *v == S::zero()) {
                continue;
            }
            for (b, &gv) in d_bias.iter_mut().zip(g) {
                *b += gv;
            }
            for c in 0..ci {
                let xv = x[t * ci + c];
                if xv != S::zero() {
                    let start = (ci + c) * co;
                    axpy(&mut d_kernel[start..start + co], xv, g);
                }
                if t >= d {
                    let xv = x[(t - d) * ci + c];
                    if xv != S::zero() {
                        let start = c * co;
                        axpy(&mut d_kernel[start..start + co], xv, g);
                    }
                }
            }
            if let Some(dx) = d_x.as_deref_mut() {
                for c in 0..ci {
                    dx[t * ci + c] += dot(self.tap(1, c), g);
                    if t >= d {
                        dx[(t - d) * ci + c] += dot(self.tap(0, c), g);
                    }
                }
            }
        }
    }
}

/// `out[t, o] += Σ_c x[t, c]·w[c, o]` (1×1 convolution without bias).
pub(crate) fn pointwise_forward<S: Scalar>(w: &[S], c_in: usize, c_out: usize, x: &[S], steps: usize, out: &mut [S]) {
    for t in 0..steps {
        let row = &mut out[t * c_out..(t + 1) * c_out];
        for c in 0..c_in {
            let xv = x[t * c_in + c];
            if xv != S::zero() {
                axpy(row, xv, &w[c * c_out..(c + 1) * c_out]);
            }
        }
    }
}

pub(crate) fn pointwise_backward<S: Scalar>(
    w: &[S],
    c_in: usize,
    c_out: usize,
    x: &[S],
    steps: usize,
    d_out: &[S],
    d_w: &mut [S],
    mut d_x: Option<&mut [S]>,
) {
    for t in 0..steps {
        let g = &d_out[t * c_out..(t + 1) * c_out];
        for c in 0..c_in {
            let xv = x[t * c_in + c];
            if xv != S::zero() {
                axpy(&mut d_w[c * c_out..(c + 1) * c_out], xv, g);
            }
            if let Some(dx) = d_x.as_deref_mut() {
                dx[t * c_in + c] += dot(&w[c * c_out..(c + 1) * c_out], g);
            }
        }
    }
}

#[inline]
pub(crate) fn axpy<S: Scalar>(y: &mut [S], a: S, x: &[S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Eight independent partial sums so the loop vectorizes; the reduction order
/// is fixed, so results stay deterministic.
#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [S::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = S::zero();
    for (&x, &y) in ar.iter().zip(br) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Causal dilated convolution of a `[S, T, C_in]` batch with a `[2, C_in, C_out]` kernel.
pub fn causal_conv1d<S: Scalar>(
    input: &Tensor3<S>,
    kernel: &[S],
    bias: &[S],
    dilation: usize,
) -> Result<Tensor3<S>> {
    if dilation == 0 {
        return Err(Error::Config("dilation must be at least 1".into()));
    }
    let [batch, steps, c_in] = input.shape();
    let c_out = bias.len();
    if c_out == 0 {
        return Err(Error::Empty("convolution bias (output channels)"));
    }
    if kernel.len() != 2 * c_in * c_out {
        return Err(Error::Shape {
            axis: "kernel [2, C_in, C_out]",
            expected: 2 * c_in * c_out,
            got: kernel.len(),
        });
    }
    let conv = ConvRef {
        kernel,
        bias,
        c_in,
        c_out,
        dilation,
    };
    let mut out = Tensor3::zeros(batch, steps, c_out);
    for s in 0..batch {
        conv.forward(input.sample(s), steps, out.sample_mut(s));
    }
    Ok(out)
}
