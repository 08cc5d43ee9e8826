//! Graph attention node classifiers for the registration graphs.
//!
//! [`tensor`] is a small tape-based reverse-mode autodiff over dense `f64`
//! matrices. [`han`] and [`hgt`] build the two models on it, [`train`] runs
//! Adam with validation-loss early stopping and [`checkpoint`] persists
//! parameters with their configuration.

pub mod checkpoint;
mod error;
pub mod han;
pub mod hgt;
pub mod model;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{Dropout, Forward, GnnConfig, GnnModel, GraphInput, ModelKind};
pub use params::{Adam, AdamConfig, ParamStore};
pub use tensor::{Tape, Var};
pub use train::{train, EarlyStopping, EpochLog, TrainConfig, TrainOutcome};
