//! Mean-squared-error training with Adam and validation early stopping.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magdata::WindowedDataset;
use crate::neuralnet::{Model, ModelSpec, ParameterSet, OUTPUT_DIM};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

/// Windows per forward chunk when only predictions are needed.
const EVAL_CHUNK: usize = 256;

/// Mean over all `S·2` entries of the squared error, and its gradient `2(pred − truth)/(2S)`.
pub fn mse_loss<S: Scalar>(pred: &[[S; OUTPUT_DIM]], truth: &[[S; OUTPUT_DIM]]) -> Result<(S, Vec<[S; OUTPUT_DIM]>)> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            axis: "batch",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Empty("mse_loss needs at least one sample"));
    }
    let n = S::of_usize(pred.len() * OUTPUT_DIM);
    let two = S::of(2.0);
    let mut loss = S::zero();
    let grad = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            std::array::from_fn(|o| {
                let d = p[o] - t[o];
                loss += d * d;
                two * d / n
            })
        })
        .collect();
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size, max_epochs and patience must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Adam with bias correction; moments are congruent with the parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub learning_rate: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    m: ParameterSet<S>,
    v: ParameterSet<S>,
    step: u64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(like: &ParameterSet<S>, learning_rate: f64) -> Self {
        Self {
            learning_rate: S::of(learning_rate),
            beta1: S::of(0.9),
            beta2: S::of(0.999),
            eps: S::of(1e-8),
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &ParameterSet<S> {
        &self.m
    }

    pub fn second_moment(&self) -> &ParameterSet<S> {
        &self.v
    }

    pub fn step(&mut self, params: &mut ParameterSet<S>, grads: &ParameterSet<S>) {
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let one = S::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let moments = self.m.iter_scalars_mut().zip(self.v.iter_scalars_mut());
        for ((p, &g), (m, v)) in params.iter_scalars_mut().zip(grads.iter_scalars()).zip(moments) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Patience-based stopping on a loss to minimize. Epochs are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            StopDecision::Improved
        } else if epoch - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    Monitor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

/// Train with the default (never interrupting) monitor.
pub fn train<S: Scalar>(
    spec: &ModelSpec,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(ParameterSet<S>, TrainHistory)> {
    train_with(spec, train_set, val_set, config, |_, _, _| ControlFlow::Continue(()))
}

/// Train, calling `monitor` after every epoch with the current parameters.
/// Returning `Break` ends training early; the best-validation parameters are
/// still the ones returned.
pub fn train_with<S, F>(
    spec: &ModelSpec,
    train_set: &WindowedDataset,
    val_set: &WindowedDataset,
    config: &TrainConfig,
    mut monitor: F,
) -> Result<(ParameterSet<S>, TrainHistory)>
where
    S: Scalar,
    F: FnMut(&EpochSummary, &Model, &ParameterSet<S>) -> ControlFlow<()>,
{
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Empty("training and validation sets must be non-empty"));
    }
    for ds in [train_set, val_set] {
        if ds.window() != spec.window {
            return Err(Error::Shape {
                axis: "window",
                expected: spec.window,
                got: ds.window(),
            });
        }
    }
    let model = Model::new(*spec)?;
    let mut params = model.init_params::<S>(config.seed);
    let mut adam = Adam::new(&params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);

    let x_train: Tensor3<S> = train_set.to_tensor()?;
    let y_train = train_set.labels_as::<S>();
    let x_val: Tensor3<S> = val_set.to_tensor()?;
    let y_val = val_set.labels_as::<S>();

    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum_sq = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let x = x_train.select(idx);
            let y: Vec<[S; OUTPUT_DIM]> = idx.iter().map(|&i| y_train[i]).collect();
            let pass = model.forward_pass(&params, &x)?;
            let (loss, grad) = mse_loss(&pass.predictions(), &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch + 1 });
            }
            sum_sq += loss.as_f64() * (idx.len() * OUTPUT_DIM) as f64;
            let grads = model.backward_pass(&params, &x, &pass, &grad)?;
            adam.step(&mut params, &grads);
        }
        let train_loss = sum_sq / (train_set.len() * OUTPUT_DIM) as f64;
        let val_loss = dataset_mse(&model, &params, &x_val, &y_val)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        history.stopped_epoch = epoch;

        let decision = stopper.update(epoch, val_loss);
        if decision == StopDecision::Improved {
            best.clone_from(&params);
        }
        let summary = EpochSummary {
            epoch,
            train_loss,
            val_loss,
            improved: decision == StopDecision::Improved,
        };
        if decision == StopDecision::Stop {
            history.stop_reason = StopReason::Patience;
            break;
        }
        if monitor(&summary, &model, &params).is_break() {
            history.stop_reason = StopReason::Monitor;
            break;
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok((best, history))
}

fn dataset_mse<S: Scalar>(
    model: &Model,
    params: &ParameterSet<S>,
    x: &Tensor3<S>,
    y: &[[S; OUTPUT_DIM]],
) -> Result<f64> {
    let pred = predict_tensor(model, params, x)?;
    let sum: f64 = pred
        .iter()
        .zip(y)
        .map(|(p, t)| (0..OUTPUT_DIM).map(|o| (p[o] - t[o]).as_f64().powi(2)).sum::<f64>())
        .sum();
    Ok(sum / (y.len() * OUTPUT_DIM) as f64)
}

fn predict_tensor<S: Scalar>(model: &Model, params: &ParameterSet<S>, x: &Tensor3<S>) -> Result<Vec<[S; OUTPUT_DIM]>> {
    let idx: Vec<usize> = (0..x.batch()).collect();
    let mut out = Vec::with_capacity(x.batch());
    for chunk in idx.chunks(EVAL_CHUNK) {
        out.extend(model.forward(params, &x.select(chunk))?);
    }
    Ok(out)
}

/// Predicted positions for every window of `ds`, in order.
pub fn predict<S: Scalar>(model: &Model, params: &ParameterSet<S>, ds: &WindowedDataset) -> Result<Vec<[f64; 2]>> {
    if ds.is_empty() {
        return Ok(Vec::new());
    }
    let x: Tensor3<S> = ds.to_tensor()?;
    Ok(predict_tensor(model, params, &x)?
        .into_iter()
        .map(|p| [p[0].as_f64(), p[1].as_f64()])
        .collect())
}
