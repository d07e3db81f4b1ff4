//! Indoor magnetic localization with a multi-scale temporal convolutional
//! network feeding an LSTM.
//!
//! * [`magdata`]: trace I/O, feature derivation, normalization, windowing,
//!   speed resampling and splits.
//! * [`neuralnet`]: TCN / LSTM building blocks and the model family with exact gradients.
//! * [`train`]: MSE training with Adam and validation early stopping.
//! * [`evalsuite`]: error metrics, DTW fingerprint baseline, speed sweeps.
//! * [`simworld`]: synthetic magnetic worlds and walkers.
//!
//! The numeric code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod error;
pub mod evalsuite;
pub mod magdata;
pub mod neuralnet;
pub mod scalar;
pub mod simworld;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor3;

pub type Tensor = tensor::Tensor3<f64>;
pub type Params = neuralnet::ParameterSet<f64>;

pub type Checkpoint = neuralnet::Checkpoint<f64>;
pub type Adam = train::Adam<f64>;
