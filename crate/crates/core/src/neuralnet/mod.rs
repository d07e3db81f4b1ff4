//! Numerical core: causal dilated convolutions, TCN stacks, the multi-scale
//! layer, a single-layer LSTM and the position head, all with hand-derived
//! reverse-mode gradients.

mod checkpoint;
mod conv;
mod lstm;
mod model;
mod params;
mod tcn;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, MAGIC};
pub use conv::causal_conv1d;
pub use lstm::{lstm_forward, LstmLayout};
pub use model::{ForwardPass, HeadLayout, Model, ModelKind, ModelSpec, INPUT_CHANNELS, OUTPUT_DIM};
pub use params::{Init, LayoutBuilder, Param, ParamId, ParamInfo, ParamLayout, ParameterSet};
pub use tcn::{multiscale_forward, tcn_forward, ConvLayerLayout, TcnLayout, TcnSpec, KERNEL_SIZE};
