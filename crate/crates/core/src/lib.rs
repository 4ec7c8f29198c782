//! Activation-function benchmarking on dense and convolutional networks,
//! written from scratch on `f64` tensors.

pub mod activations;
pub mod bench;
pub mod dataio;
pub mod error;
pub mod layers;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use activations::ActivationKind;
pub use error::{Error, Result};
pub use layers::{Layer, Mode};
pub use models::{Model, ModelConfig, ModelKind, TrainConfig};
pub use tensor::Tensor;
