//! Temporal convolutional networks and the multi-scale layer.
//!
//! A TCN with `k` layers uses dilations `1, 2, …, 2^(k−1)`; with kernel size 2
//! its last output step sees exactly the last `2^k` input steps. The
//! multi-scale layer runs TCNs with `k = 1..=K` side by side on the same input
//! and concatenates their outputs along the channel axis.

use serde::{Deserialize, Serialize};

use super::conv::{pointwise_backward, pointwise_forward, ConvRef};
use super::params::{Init, LayoutBuilder, ParamId, ParameterSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

pub const KERNEL_SIZE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcnSpec {
    /// Number of dilated layers `k`.
    pub layers: usize,
    /// Feature maps per layer.
    pub channels: usize,
    pub kernel_size: usize,
    pub residual: bool,
}

impl TcnSpec {
    pub fn new(layers: usize, channels: usize, residual: bool) -> Result<Self> {
        let spec = Self {
            layers,
            channels,
            kernel_size: KERNEL_SIZE,
            residual,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.channels == 0 {
            return Err(Error::Config(format!(
                "TCN needs at least one layer and one channel, got {self:?}"
            )));
        }
        if self.layers > 30 {
            return Err(Error::Config(format!("TCN depth {} is too large", self.layers)));
        }
        if self.kernel_size != KERNEL_SIZE {
            return Err(Error::Config(format!(
                "only kernel size {KERNEL_SIZE} is supported, got {}",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// `{2^0, 2^1, …, 2^(k−1)}` in layer order.
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.layers).map(|j| 1usize << j).collect()
    }

    /// `1 + Σ (kernel − 1)·d`, which is `2^k` for kernel size 2.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations().iter().map(|d| (self.kernel_size - 1) * d).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerLayout {
    pub kernel: ParamId,
    pub bias: ParamId,
    /// 1×1 projection for the residual path when channel counts differ.
    pub proj: Option<ParamId>,
    pub c_in: usize,
    pub c_out: usize,
    pub dilation: usize,
}

/// One TCN bound to its parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnLayout {
    spec: TcnSpec,
    in_channels: usize,
    layers: Vec<ConvLayerLayout>,
}

/// Per-sample activations of every layer, `[T, C_out]` each, after ReLU.
#[derive(Debug, Clone)]
pub(crate) struct TcnCache<S> {
    pub outs: Vec<Vec<S>>,
}

impl TcnLayout {
    pub fn build(spec: TcnSpec, in_channels: usize, prefix: &str, b: &mut LayoutBuilder) -> Result<Self> {
        spec.validate()?;
        if in_channels == 0 {
            return Err(Error::Config("TCN input must have at least one channel".into()));
        }
        let m = spec.channels;
        let layers = spec
            .dilations()
            .into_iter()
            .enumerate()
            .map(|(j, dilation)| {
                let c_in = if j == 0 { in_channels } else { m };
                let kernel = b.add(
                    format!("{prefix}.layer{j}.kernel"),
                    &[KERNEL_SIZE, c_in, m],
                    Init::Glorot {
                        fan_in: KERNEL_SIZE * c_in,
                        fan_out: KERNEL_SIZE * m,
                    },
                );
                let bias = b.add(format!("{prefix}.layer{j}.bias"), &[m], Init::Zeros);
                let proj = (spec.residual && c_in != m).then(|| {
                    b.add(
                        format!("{prefix}.layer{j}.proj"),
                        &[c_in, m],
                        Init::Glorot { fan_in: c_in, fan_out: m },
                    )
                });
                ConvLayerLayout {
                    kernel,
                    bias,
                    proj,
                    c_in,
                    c_out: m,
                    dilation,
                }
            })
            .collect();
        Ok(Self {
            spec,
            in_channels,
            layers,
        })
    }

    pub fn spec(&self) -> &TcnSpec {
        &self.spec
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.spec.channels
    }

    pub fn layers(&self) -> &[ConvLayerLayout] {
        &self.layers
    }

    fn conv<'a, S: Scalar>(&self, l: &ConvLayerLayout, params: &'a ParameterSet<S>) -> ConvRef<'a, S> {
        ConvRef {
            kernel: params.get(l.kernel),
            bias: params.get(l.bias),
            c_in: l.c_in,
            c_out: l.c_out,
            dilation: l.dilation,
        }
    }

    pub(crate) fn forward_sample<S: Scalar>(&self, params: &ParameterSet<S>, x: &[S], steps: usize) -> TcnCache<S> {
        let mut outs: Vec<Vec<S>> = Vec::with_capacity(self.layers.len());
        for (j, l) in self.layers.iter().enumerate() {
            let input: &[S] = if j == 0 { x } else { &outs[j - 1] };
            let mut out = vec![S::zero(); steps * l.c_out];
            self.conv(l, params).forward(input, steps, &mut out);
            if self.spec.residual {
                match l.proj {
                    Some(p) => pointwise_forward(params.get(p), l.c_in, l.c_out, input, steps, &mut out),
                    None => out.iter_mut().zip(input).for_each(|(o, &v)| *o += v),
                }
            }
            for v in &mut out {
                if !(*v > S::zero()) {
                    *v = S::zero();
                }
            }
            outs.push(out);
        }
        TcnCache { outs }
    }

    /// Backpropagate `d_out` (`[T, M]`) through every layer, accumulating into
    /// `grads`; the input gradient is added to `d_x` when requested.
    pub(crate) fn backward_sample<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        x: &[S],
        steps: usize,
        cache: &TcnCache<S>,
        d_out: &[S],
        grads: &mut ParameterSet<S>,
        d_x: Option<&mut [S]>,
    ) {
        let mut d_cur: Vec<S> = d_out.to_vec();
        let mut d_x = d_x;
        for j in (0..self.layers.len()).rev() {
            let l = &self.layers[j];
            let out = &cache.outs[j];
            let input: &[S] = if j == 0 { x } else { &cache.outs[j - 1] };
            for (g, &o) in d_cur.iter_mut().zip(out) {
                if !(o > S::zero()) {
                    *g = S::zero();
                }
            }
            let need_dx = j > 0 || d_x.is_some();
            let mut d_in = if need_dx { vec![S::zero(); steps * l.c_in] } else { Vec::new() };
            let (d_kernel, d_bias) = grads.pair_mut(l.kernel, l.bias);
            self.conv(l, params).backward(
                input,
                steps,
                &d_cur,
                d_kernel,
                d_bias,
                need_dx.then_some(d_in.as_mut_slice()),
            );
            if self.spec.residual {
                match l.proj {
                    Some(p) => pointwise_backward(
                        params.get(p),
                        l.c_in,
                        l.c_out,
                        input,
                        steps,
                        &d_cur,
                        grads.get_mut(p),
                        need_dx.then_some(d_in.as_mut_slice()),
                    ),
                    None if need_dx => d_in.iter_mut().zip(&d_cur).for_each(|(a, &g)| *a += g),
                    None => {}
                }
            }
            if j == 0 {
                if let Some(dx) = d_x.as_deref_mut() {
                    dx.iter_mut().zip(&d_in).for_each(|(a, &g)| *a += g);
                }
            } else {
                d_cur = d_in;
            }
        }
    }
}

/// Run one TCN over a `[S, T, C_in]` batch, producing `[S, T, M]`.
pub fn tcn_forward<S: Scalar>(layout: &TcnLayout, input: &Tensor3<S>, params: &ParameterSet<S>) -> Result<Tensor3<S>> {
    check_channels(layout.in_channels, input.channels())?;
    let [batch, steps, _] = input.shape();
    let mut out = Tensor3::zeros(batch, steps, layout.out_channels());
    for s in 0..batch {
        let mut cache = layout.forward_sample(params, input.sample(s), steps);
        let last = cache.outs.pop().expect("TCN has at least one layer");
        out.sample_mut(s).copy_from_slice(&last);
    }
    Ok(out)
}

/// Channel-wise concatenation of several TCNs run on the same input, in order.
pub fn multiscale_forward<S: Scalar>(
    layouts: &[TcnLayout],
    input: &Tensor3<S>,
    params: &ParameterSet<S>,
) -> Result<Tensor3<S>> {
    if layouts.is_empty() {
        return Err(Error::Empty("multi-scale layer needs at least one TCN"));
    }
    for l in layouts {
        check_channels(l.in_channels, input.channels())?;
    }
    let [batch, steps, _] = input.shape();
    let d_f = layouts.iter().map(TcnLayout::out_channels).sum();
    let mut out = Tensor3::zeros(batch, steps, d_f);
    for s in 0..batch {
        let x = input.sample(s);
        let caches: Vec<_> = layouts.iter().map(|l| l.forward_sample(params, x, steps)).collect();
        concat_into(layouts, &caches, steps, out.sample_mut(s));
    }
    Ok(out)
}

pub(crate) fn concat_into<S: Scalar>(layouts: &[TcnLayout], caches: &[TcnCache<S>], steps: usize, out: &mut [S]) {
    let d_f: usize = layouts.iter().map(TcnLayout::out_channels).sum();
    let mut lo = 0;
    for (l, c) in layouts.iter().zip(caches) {
        let m = l.out_channels();
        let last = c.outs.last().expect("TCN has at least one layer");
        for t in 0..steps {
            out[t * d_f + lo..t * d_f + lo + m].copy_from_slice(&last[t * m..(t + 1) * m]);
        }
        lo += m;
    }
}

fn check_channels(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            axis: "input channels",
            expected,
            got,
        });
    }
    Ok(())
}
