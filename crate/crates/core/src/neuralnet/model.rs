//! Model family: the multi-scale TCN + LSTM localizer and its baselines.
//!
//! | kind        | body                                   | head input            |
//! |-------------|----------------------------------------|-----------------------|
//! | `MSTL`      | multi-scale TCN → LSTM                 | final hidden state    |
//! | `LSTM_ONLY` | LSTM on the raw features               | final hidden state    |
//! | `TCN_ONLY`  | one TCN with `k = ⌈log2 T⌉`            | last time step        |
//! | `MSTT`      | multi-scale TCN → TCN with `k = ⌈log2 T⌉` | last time step     |
//!
//! The head is an affine map to a 2-D position.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{axpy, dot};
use super::lstm::{LstmCache, LstmLayout};
use super::params::{Init, LayoutBuilder, ParamId, ParamLayout, ParameterSet};
use super::tcn::{concat_into, TcnCache, TcnLayout, TcnSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

/// Input features per time step: `(m_z, m_xy, m_xyz)`.
pub const INPUT_CHANNELS: usize = 3;
/// Planar position.
pub const OUTPUT_DIM: usize = 2;

/// Samples per gradient-accumulation chunk. Chunks are reduced in index order,
/// so gradients do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Mstl,
    LstmOnly,
    TcnOnly,
    Mstt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Mstl, Self::LstmOnly, Self::TcnOnly, Self::Mstt];

    pub fn has_multiscale(self) -> bool {
        matches!(self, Self::Mstl | Self::Mstt)
    }

    pub fn has_lstm(self) -> bool {
        matches!(self, Self::Mstl | Self::LstmOnly)
    }

    pub fn has_tail_tcn(self) -> bool {
        matches!(self, Self::TcnOnly | Self::Mstt)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mstl => "MSTL",
            Self::LstmOnly => "LSTM_ONLY",
            Self::TcnOnly => "TCN_ONLY",
            Self::Mstt => "MSTT",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MSTL" => Ok(Self::Mstl),
            "LSTM_ONLY" | "LSTM" => Ok(Self::LstmOnly),
            "TCN_ONLY" | "TCN" => Ok(Self::TcnOnly),
            "MSTT" => Ok(Self::Mstt),
            _ => Err(Error::Config(format!(
                "unknown model kind `{s}`; expected one of MSTL, LSTM_ONLY, TCN_ONLY, MSTT"
            ))),
        }
    }
}

fn default_output_dim() -> usize {
    OUTPUT_DIM
}

fn default_residual() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Number of parallel TCNs `K` (TCN `i` has `i` dilated layers).
    pub tcns: usize,
    /// Feature maps per TCN `M`.
    pub channels: usize,
    /// Window size `T`, also the LSTM unroll length.
    pub window: usize,
    /// LSTM hidden units.
    pub hidden: usize,
    #[serde(default = "default_output_dim")]
    pub output_dim: usize,
    #[serde(default = "default_residual")]
    pub residual: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, tcns: usize, channels: usize, window: usize, hidden: usize) -> Self {
        Self {
            kind,
            tcns,
            channels,
            window,
            hidden,
            output_dim: OUTPUT_DIM,
            residual: true,
        }
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.output_dim != OUTPUT_DIM {
            return bad(format!("output_dim must be {OUTPUT_DIM}, got {}", self.output_dim));
        }
        if self.kind.has_multiscale() && !(1..=30).contains(&self.tcns) {
            return bad(format!("{} needs 1..=30 TCNs, got {}", self.kind, self.tcns));
        }
        if (self.kind.has_multiscale() || self.kind.has_tail_tcn()) && self.channels == 0 {
            return bad(format!("{} needs at least one channel per TCN", self.kind));
        }
        if self.kind.has_lstm() && self.hidden == 0 {
            return bad(format!("{} needs at least one hidden unit", self.kind));
        }
        Ok(())
    }

    /// Channels entering the sequence body: `D_f = K·M` after the multi-scale layer, else 3.
    pub fn feature_dim(&self) -> usize {
        if self.kind.has_multiscale() {
            self.tcns * self.channels
        } else {
            INPUT_CHANNELS
        }
    }

    /// Depth of the single trailing TCN: `⌈log2 T⌉`, at least 1.
    pub fn tail_depth(&self) -> usize {
        let t = self.window.max(2);
        (usize::BITS - (t - 1).leading_zeros()) as usize
    }

    /// Explains a mismatch between the window and the receptive fields, if any.
    pub fn receptive_field_warning(&self) -> Option<String> {
        let t = self.window;
        if self.kind.has_multiscale() && self.tcns < usize::BITS as usize && t != 1 << self.tcns {
            return Some(format!(
                "window T={t} differs from the widest multi-scale receptive field 2^K={}; \
                 left zero padding absorbs the difference",
                1usize << self.tcns
            ));
        }
        if self.kind.has_tail_tcn() && !t.is_power_of_two() {
            return Some(format!(
                "window T={t} is not a power of two; the trailing TCN uses k={} (receptive field {})",
                self.tail_depth(),
                1usize << self.tail_depth()
            ));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadLayout {
    /// `[2, input]`
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
}

/// A model bound to its parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layout: ParamLayout,
    multiscale: Vec<TcnLayout>,
    lstm: Option<LstmLayout>,
    tail: Option<TcnLayout>,
    head: HeadLayout,
}

#[derive(Debug, Clone)]
struct SampleCache<S> {
    scales: Vec<TcnCache<S>>,
    /// Concatenated multi-scale output `[T, D_f]`; empty without a multi-scale layer.
    features: Vec<S>,
    lstm: Option<LstmCache<S>>,
    tail: Option<TcnCache<S>>,
    y: [S; OUTPUT_DIM],
}

/// Forward activations of a batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<S> {
    caches: Vec<SampleCache<S>>,
}

impl<S: Scalar> ForwardPass<S> {
    pub fn predictions(&self) -> Vec<[S; OUTPUT_DIM]> {
        self.caches.iter().map(|c| c.y).collect()
    }
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut b = LayoutBuilder::new();
        let mut multiscale = Vec::new();
        if spec.kind.has_multiscale() {
            for k in 1..=spec.tcns {
                let tcn_spec = TcnSpec::new(k, spec.channels, spec.residual)?;
                multiscale.push(TcnLayout::build(tcn_spec, INPUT_CHANNELS, &format!("ms{k}"), &mut b)?);
            }
        }
        let body_in = spec.feature_dim();
        let lstm = if spec.kind.has_lstm() {
            Some(LstmLayout::build(body_in, spec.hidden, "lstm", &mut b)?)
        } else {
            None
        };
        let tail = if spec.kind.has_tail_tcn() {
            let tcn_spec = TcnSpec::new(spec.tail_depth(), spec.channels, spec.residual)?;
            Some(TcnLayout::build(tcn_spec, body_in, "tcn", &mut b)?)
        } else {
            None
        };
        let head_in = if lstm.is_some() { spec.hidden } else { spec.channels };
        let head = HeadLayout {
            weight: b.add(
                "head.weight",
                &[OUTPUT_DIM, head_in],
                Init::Glorot {
                    fan_in: head_in,
                    fan_out: OUTPUT_DIM,
                },
            ),
            bias: b.add("head.bias", &[OUTPUT_DIM], Init::Zeros),
            input: head_in,
        };
        Ok(Self {
            spec,
            layout: b.finish(),
            multiscale,
            lstm,
            tail,
            head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn multiscale(&self) -> &[TcnLayout] {
        &self.multiscale
    }

    pub fn lstm(&self) -> Option<&LstmLayout> {
        self.lstm.as_ref()
    }

    pub fn tail(&self) -> Option<&TcnLayout> {
        self.tail.as_ref()
    }

    pub fn head(&self) -> &HeadLayout {
        &self.head
    }

    /// Glorot-uniform weights, zero biases, LSTM forget bias one.
    pub fn init_params<S: Scalar>(&self, seed: u64) -> ParameterSet<S> {
        self.layout.init(seed)
    }

    fn check_input<S: Scalar>(&self, params: &ParameterSet<S>, input: &Tensor3<S>) -> Result<()> {
        self.layout.check(params)?;
        if input.channels() != INPUT_CHANNELS {
            return Err(Error::Shape {
                axis: "input channels",
                expected: INPUT_CHANNELS,
                got: input.channels(),
            });
        }
        if input.time() != self.spec.window {
            return Err(Error::Shape {
                axis: "input time (window)",
                expected: self.spec.window,
                got: input.time(),
            });
        }
        Ok(())
    }

    fn forward_sample<S: Scalar>(&self, params: &ParameterSet<S>, x: &[S]) -> SampleCache<S> {
        let steps = self.spec.window;
        let scales: Vec<TcnCache<S>> = self
            .multiscale
            .iter()
            .map(|l| l.forward_sample(params, x, steps))
            .collect();
        let mut features = Vec::new();
        if !scales.is_empty() {
            features = vec![S::zero(); steps * self.spec.feature_dim()];
            concat_into(&self.multiscale, &scales, steps, &mut features);
        }
        let body_in: &[S] = if scales.is_empty() { x } else { &features };

        let lstm = self.lstm.as_ref().map(|l| l.forward_sample(params, body_in, steps));
        let tail = self.tail.as_ref().map(|l| l.forward_sample(params, body_in, steps));
        let head_in: &[S] = match (&lstm, &tail) {
            (Some(c), _) => c.final_hidden(self.head.input),
            (None, Some(c)) => last_row(c.outs.last().expect("non-empty TCN"), self.head.input),
            (None, None) => unreachable!("every model kind has an LSTM or a trailing TCN"),
        };
        let w = params.get(self.head.weight);
        let b = params.get(self.head.bias);
        let n = self.head.input;
        let y = std::array::from_fn(|o| b[o] + dot(&w[o * n..(o + 1) * n], head_in));
        SampleCache {
            scales,
            features,
            lstm,
            tail,
            y,
        }
    }

    fn backward_sample<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        x: &[S],
        cache: &SampleCache<S>,
        dy: &[S; OUTPUT_DIM],
        grads: &mut ParameterSet<S>,
    ) {
        let steps = self.spec.window;
        let n = self.head.input;
        let head_in: &[S] = match (&cache.lstm, &cache.tail) {
            (Some(c), _) => c.final_hidden(n),
            (None, Some(c)) => last_row(c.outs.last().expect("non-empty TCN"), n),
            (None, None) => unreachable!(),
        };
        let w = params.get(self.head.weight);
        let mut d_head_in = vec![S::zero(); n];
        {
            let (gw, gb) = grads.pair_mut(self.head.weight, self.head.bias);
            for o in 0..OUTPUT_DIM {
                gb[o] += dy[o];
                axpy(&mut gw[o * n..(o + 1) * n], dy[o], head_in);
                axpy(&mut d_head_in, dy[o], &w[o * n..(o + 1) * n]);
            }
        }

        let has_scales = !cache.scales.is_empty();
        let body_in: &[S] = if has_scales { &cache.features } else { x };
        let mut d_features = if has_scales {
            vec![S::zero(); steps * self.spec.feature_dim()]
        } else {
            Vec::new()
        };
        if let (Some(l), Some(c)) = (&self.lstm, &cache.lstm) {
            l.backward_sample(
                params,
                body_in,
                steps,
                c,
                &d_head_in,
                grads,
                has_scales.then_some(d_features.as_mut_slice()),
            );
        }
        if let (Some(l), Some(c)) = (&self.tail, &cache.tail) {
            let m = l.out_channels();
            let mut d_out = vec![S::zero(); steps * m];
            d_out[(steps - 1) * m..].copy_from_slice(&d_head_in);
            l.backward_sample(
                params,
                body_in,
                steps,
                c,
                &d_out,
                grads,
                has_scales.then_some(d_features.as_mut_slice()),
            );
        }
        if has_scales {
            let d_f = self.spec.feature_dim();
            let mut lo = 0;
            for (l, c) in self.multiscale.iter().zip(&cache.scales) {
                let m = l.out_channels();
                let mut d_out = vec![S::zero(); steps * m];
                for t in 0..steps {
                    d_out[t * m..(t + 1) * m].copy_from_slice(&d_features[t * d_f + lo..t * d_f + lo + m]);
                }
                l.backward_sample(params, x, steps, c, &d_out, grads, None);
                lo += m;
            }
        }
    }

    /// Predicted positions `[S, 2]`.
    pub fn forward<S: Scalar>(&self, params: &ParameterSet<S>, input: &Tensor3<S>) -> Result<Vec<[S; OUTPUT_DIM]>> {
        Ok(self.forward_pass(params, input)?.predictions())
    }

    pub fn forward_pass<S: Scalar>(&self, params: &ParameterSet<S>, input: &Tensor3<S>) -> Result<ForwardPass<S>> {
        self.check_input(params, input)?;
        let caches = (0..input.batch())
            .into_par_iter()
            .map(|s| self.forward_sample(params, input.sample(s)))
            .collect();
        Ok(ForwardPass { caches })
    }

    /// Parameter gradients of a scalar loss given `dL/dy` for every sample.
    pub fn backward_pass<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        input: &Tensor3<S>,
        pass: &ForwardPass<S>,
        d_out: &[[S; OUTPUT_DIM]],
    ) -> Result<ParameterSet<S>> {
        self.check_input(params, input)?;
        let batch = input.batch();
        if pass.caches.len() != batch || d_out.len() != batch {
            return Err(Error::Shape {
                axis: "batch",
                expected: batch,
                got: if pass.caches.len() != batch { pass.caches.len() } else { d_out.len() },
            });
        }
        let chunks: Vec<ParameterSet<S>> = (0..batch.div_ceil(GRAD_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut g = self.layout.zeros::<S>();
                for s in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(batch) {
                    self.backward_sample(params, input.sample(s), &pass.caches[s], &d_out[s], &mut g);
                }
                g
            })
            .collect();
        let mut iter = chunks.into_iter();
        let mut total = iter.next().unwrap_or_else(|| self.layout.zeros());
        for g in iter {
            total.add_assign(&g);
        }
        Ok(total)
    }

    /// Recomputes the forward pass, then backpropagates `d_out`.
    pub fn backward<S: Scalar>(
        &self,
        params: &ParameterSet<S>,
        input: &Tensor3<S>,
        d_out: &[[S; OUTPUT_DIM]],
    ) -> Result<ParameterSet<S>> {
        let pass = self.forward_pass(params, input)?;
        self.backward_pass(params, input, &pass, d_out)
    }

    /// The `[S, T, D]` sequence fed to the LSTM or trailing TCN.
    pub fn body_input<S: Scalar>(&self, params: &ParameterSet<S>, input: &Tensor3<S>) -> Result<Tensor3<S>> {
        self.check_input(params, input)?;
        if self.multiscale.is_empty() {
            return Ok(input.clone());
        }
        let pass = self.forward_pass(params, input)?;
        let data = pass.caches.into_iter().flat_map(|c| c.features).collect();
        Tensor3::from_vec(input.batch(), input.time(), self.spec.feature_dim(), data)
    }

    /// Sign pattern of every ReLU pre-activation (`true` when active). Used by
    /// gradient checks to detect finite-difference steps that cross a kink.
    #[doc(hidden)]
    pub fn activation_pattern<S: Scalar>(&self, params: &ParameterSet<S>, input: &Tensor3<S>) -> Result<Vec<bool>> {
        let pass = self.forward_pass(params, input)?;
        Ok(pass
            .caches
            .iter()
            .flat_map(|c| {
                c.scales
                    .iter()
                    .chain(c.tail.iter())
                    .flat_map(|t| t.outs.iter().flatten().map(|v| *v > S::zero()))
                    .collect::<Vec<_>>()
            })
            .collect())
    }
}

fn last_row<S>(rows: &[S], width: usize) -> &[S] {
    &rows[rows.len() - width..]
}
