//! Trainable and structural layers with forward and backward passes.
//!
//! Layers cache what their backward pass needs only during train-mode
//! forwards; calling `backward` after an infer-mode forward is a state error.

mod batchnorm;
pub mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod init;
mod pool;

pub use batchnorm::{BatchNormLayer, BnGrads, BN_EPSILON, BN_MOMENTUM};
pub use conv::{ConvGrads, ConvLayer};
pub use dense::{DenseGrads, DenseLayer};
pub use dropout::DropoutLayer;
pub use init::{lecun_normal_init, uniform_init, InitScheme, WeightSampler};
pub use pool::{AvgPoolLayer, GlobalAvgPoolLayer};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// What a trainable tensor is, for deciding which tensors the L2 penalty
/// covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    BnScale,
    BnShift,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    BatchNorm(BatchNormLayer),
    AvgPool(AvgPoolLayer),
    GlobalAvgPool(GlobalAvgPoolLayer),
    Dropout(DropoutLayer),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(x, mode),
            Layer::Conv(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::AvgPool(l) => l.forward(x),
            Layer::GlobalAvgPool(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, mode, rng),
        }
    }

    /// Returns the input gradient (when requested) and the parameter
    /// gradients in [`Layer::params`] order.
    pub fn backward(&mut self, grad_out: &Tensor, need_input: bool) -> Result<(Option<Tensor>, Vec<Tensor>)> {
        Ok(match self {
            Layer::Dense(l) => {
                let g = l.backward(grad_out, need_input)?;
                (g.input, vec![g.weights, g.bias])
            }
            Layer::Conv(l) => {
                let g = l.backward(grad_out, need_input)?;
                (g.input, vec![g.kernels, g.bias])
            }
            Layer::BatchNorm(l) => {
                let g = l.backward(grad_out, need_input)?;
                (g.input, vec![g.gamma, g.beta])
            }
            Layer::AvgPool(l) => (Some(l.backward(grad_out)?), Vec::new()),
            Layer::GlobalAvgPool(l) => (Some(l.backward(grad_out)?), Vec::new()),
            Layer::Dropout(l) => (Some(l.backward(grad_out)?), Vec::new()),
        })
    }

    pub fn params(&self) -> Vec<(&Tensor, ParamRole)> {
        match self {
            Layer::Dense(l) => vec![(l.weights(), ParamRole::Weight), (l.bias(), ParamRole::Bias)],
            Layer::Conv(l) => vec![(l.kernels(), ParamRole::Weight), (l.bias(), ParamRole::Bias)],
            Layer::BatchNorm(l) => vec![(l.gamma(), ParamRole::BnScale), (l.beta(), ParamRole::BnShift)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(l) => l.params_mut().into(),
            Layer::Conv(l) => l.params_mut().into(),
            Layer::BatchNorm(l) => l.params_mut().into(),
            _ => Vec::new(),
        }
    }

    /// Parameters followed by non-trainable buffers (batch-norm running
    /// statistics): everything a checkpoint must hold.
    pub fn state(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.params().into_iter().map(|(t, _)| t).collect();
        if let Layer::BatchNorm(l) = self {
            out.push(l.running_mean());
            out.push(l.running_var());
        }
        out
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::BatchNorm(l) => l.state_mut().into(),
            other => other.params_mut(),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::Shape(format!("{} cannot take per-sample input {input:?}", self.describe()));
        match self {
            Layer::Dense(l) => {
                if input != [l.n_in()] {
                    return Err(bad());
                }
                Ok(vec![l.n_out()])
            }
            Layer::Conv(l) => {
                if input.len() != 3 || input[2] != l.in_channels() {
                    return Err(bad());
                }
                Ok(vec![input[0], input[1], l.out_channels()])
            }
            Layer::BatchNorm(l) => {
                if input.last() != Some(&l.channels()) {
                    return Err(bad());
                }
                Ok(input.to_vec())
            }
            Layer::AvgPool(_) => {
                if input.len() != 3 || !input[0].is_multiple_of(2) || !input[1].is_multiple_of(2) {
                    return Err(bad());
                }
                Ok(vec![input[0] / 2, input[1] / 2, input[2]])
            }
            Layer::GlobalAvgPool(_) => {
                if input.len() != 3 {
                    return Err(bad());
                }
                Ok(vec![input[2]])
            }
            Layer::Dropout(_) => Ok(input.to_vec()),
        }
    }

    pub fn describe(&self) -> String {
        let act = |a: Option<crate::activations::ActivationKind>| match a {
            Some(k) => format!(" - {k}"),
            None => String::new(),
        };
        match self {
            Layer::Dense(l) => format!("FC[{}→{}]{}", l.n_in(), l.n_out(), act(l.activation())),
            Layer::Conv(l) => {
                let (kh, kw) = l.kernel_size();
                format!("Cv[{kh}x{kw}]→{}{}", l.out_channels(), act(l.activation()))
            }
            Layer::BatchNorm(_) => "BN".into(),
            Layer::AvgPool(_) => "AP[2x2]".into(),
            Layer::GlobalAvgPool(_) => "GAP".into(),
            Layer::Dropout(l) => format!("Dr({:.0}%)", l.rate() * 100.0),
        }
    }
}
