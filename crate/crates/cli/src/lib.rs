//! Pipeline orchestration behind the `mstl` binary: simulate, preprocess,
//! train, eval and sweep, each writing plain JSON/CSV artifacts.

pub mod commands;
pub mod config;

pub use commands::{cmd_eval, cmd_preprocess, cmd_simulate, cmd_sweep, cmd_train, Prepared};
pub use config::{parse_factors, Algorithm, RunConfig};
