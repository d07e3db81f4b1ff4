//! Single-layer LSTM unrolled over the window.
//!
//! Gate pre-activations are stacked `[i, f, g, o]` (each `H` wide):
//! `z = W_ih·x_t + W_hh·h_{t−1} + b`, `c_t = f⊙c_{t−1} + i⊙g`, `h_t = o⊙tanh(c_t)`,
//! with logistic `i, f, o`, `tanh` candidate `g` and `h_0 = c_0 = 0`.

use super::conv::{axpy, dot};
use super::params::{Init, LayoutBuilder, ParamId, ParameterSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayout {
    /// `[4H, D]`
    pub w_ih: ParamId,
    /// `[4H, H]`
    pub w_hh: ParamId,
    /// `[4H]`
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache<S> {
    /// `[(T+1), H]`, row 0 is the zero initial state.
    pub h: Vec<S>,
    pub c: Vec<S>,
    /// Activated gates `[T, 4H]`.
    pub gates: Vec<S>,
    /// `tanh(c_t)`, `[T, H]`.
    pub tanh_c: Vec<S>,
}

impl<S: Scalar> LstmCache<S> {
    pub fn final_hidden(&self, hidden: usize) -> &[S] {
        &self.h[self.h.len() - hidden..]
    }
}

impl LstmLayout {
    pub fn build(input: usize, hidden: usize, prefix: &str, b: &mut LayoutBuilder) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Config(format!(
                "LSTM needs positive input and hidden sizes, got {input} and {hidden}"
            )));
        }
        let w_ih = b.add(
            format!("{prefix}.w_ih"),
            &[4 * hidden, input],
            Init::Glorot {
                fan_in: input,
                fan_out: 4 * hidden,
            },
        );
        let w_hh = b.add(
            format!("{prefix}.w_hh"),
            &[4 * hidden, hidden],
            Init::Glorot {
                fan_in: hidden,
                fan_out: 4 * hidden,
            },
        );
        let bias = b.add(format!("{prefix}.bias"), &[4 * hidden], Init::LstmBias { hidden });
        Ok(Self {
            w_ih,
            w_hh,
            bias,
            input,
            hidden,
        })
    }

    pub(crate) fn forward_sample<S: Scalar>(&self, params: &ParameterSet<S>, x: &[S], steps: usize) -> LstmCache<S> {
        let (d, h) = (self.input, self.hidden);
        let (w_ih, w_hh, bias) = (params.get(self.w_ih), params.get(self.w_hh), params.get(self.bias));
        let mut cache = LstmCache {
            h: vec![S::zero(); (steps + 1) * h],
            c: vec![S::zero(); (steps + 1) * h],
            gates: vec![S::zero(); steps * 4 * h],
            tanh_c: vec![S::zero(); steps * h],
        };
        for t in 0..steps {
            let xt = &x[t * d..(t + 1) * d];
            let (h_hist, h_next) = cache.h.split_at_mut((t + 1) * h);
            let h_prev = &h_hist[t * h..];
            let z = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for r in 0..4 * h {
                z[r] = bias[r] + dot(&w_ih[r * d..(r + 1) * d], xt) + dot(&w_hh[r * h..(r + 1) * h], h_prev);
            }
            for (r, v) in z.iter_mut().enumerate() {
                *v = if (2 * h..3 * h).contains(&r) { v.tanh() } else { v.sigmoid() };
            }
            let (c_hist, c_next) = cache.c.split_at_mut((t + 1) * h);
            let c_prev = &c_hist[t * h..];
            let tc = &mut cache.tanh_c[t * h..(t + 1) * h];
            for u in 0..h {
                let (i, f, g, o) = (z[u], z[h + u], z[2 * h + u], z[3 * h + u]);
                let c = f * c_prev[u] + i * g;
                c_next[u] = c;
                tc[u] = c.tanh();
                h_next[u] = o * tc[u];
            }
        }
        cache
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    pub(crate) fn backward_sample<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        x: &[S],
        steps: usize,
        cache: &LstmCache<S>,
        d_h_last: &[S],
        grads: &mut ParameterSet<S>,
        mut d_x: Option<&mut [S]>,
    ) {
        let (d, h) = (self.input, self.hidden);
        let (w_ih, w_hh) = (params.get(self.w_ih), params.get(self.w_hh));
        let mut d_bias = vec![S::zero(); 4 * h];
        let mut dh = d_h_last.to_vec();
        let mut dc = vec![S::zero(); h];
        let mut dz = vec![S::zero(); 4 * h];
        let one = S::one();
        for t in (0..steps).rev() {
            let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            let tc = &cache.tanh_c[t * h..(t + 1) * h];
            let c_prev = &cache.c[t * h..(t + 1) * h];
            for u in 0..h {
                let (i, f, g, o) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
                let d_o = dh[u] * tc[u];
                dc[u] += dh[u] * o * (one - tc[u] * tc[u]);
                dz[u] = dc[u] * g * i * (one - i);
                dz[h + u] = dc[u] * c_prev[u] * f * (one - f);
                dz[2 * h + u] = dc[u] * i * (one - g * g);
                dz[3 * h + u] = d_o * o * (one - o);
                dc[u] *= f;
            }
            let xt = &x[t * d..(t + 1) * d];
            let h_prev = &cache.h[t * h..(t + 1) * h];
            let (g_ih, g_hh) = grads.pair_mut(self.w_ih, self.w_hh);
            for r in 0..4 * h {
                let g = dz[r];
                if g == S::zero() {
                    continue;
                }
                d_bias[r] += g;
                axpy(&mut g_ih[r * d..(r + 1) * d], g, xt);
                axpy(&mut g_hh[r * h..(r + 1) * h], g, h_prev);
            }
            dh.iter_mut().for_each(|v| *v = S::zero());
            for r in 0..4 * h {
                let g = dz[r];
                if g == S::zero() {
                    continue;
                }
                axpy(&mut dh, g, &w_hh[r * h..(r + 1) * h]);
                if let Some(dx) = d_x.as_deref_mut() {
                    axpy(&mut dx[t * d..(t + 1) * d], g, &w_ih[r * d..(r + 1) * d]);
                }
            }
        }
        for (a, b) in grads.get_mut(self.bias).iter_mut().zip(&d_bias) {
            *a += *b;
        }
    }
}

/// Run the LSTM over a `[S, T, D]` batch: hidden sequence `[S, T, H]` and final state `[S, H]`.
pub fn lstm_forward<S: Scalar>(
    layout: &LstmLayout,
    input: &Tensor3<S>,
    params: &ParameterSet<S>,
) -> Result<(Tensor3<S>, Vec<Vec<S>>)> {
    if input.channels() != layout.input {
        return Err(Error::Shape {
            axis: "LSTM input channels",
            expected: layout.input,
            got: input.channels(),
        });
    }
    let [batch, steps, _] = input.shape();
    let h = layout.hidden;
    let mut seq = Tensor3::zeros(batch, steps, h);
    let mut finals = Vec::with_capacity(batch);
    for s in 0..batch {
        let cache = layout.forward_sample(params, input.sample(s), steps);
        seq.sample_mut(s).copy_from_slice(&cache.h[h..]);
        finals.push(cache.final_hidden(h).to_vec());
    }
    Ok((seq, finals))
}
