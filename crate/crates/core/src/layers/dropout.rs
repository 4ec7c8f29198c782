use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1 − rate)`; infer mode is the
/// identity.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    rate: f64,
    mask: Option<Mask>,
}

#[derive(Debug, Clone)]
enum Mask {
    Identity,
    Scaled(Vec<f64>),
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(DropoutLayer { rate, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = Some(Mask::Identity);
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.uniform() < self.rate { 0.0 } else { keep })
            .collect();
        let out = Tensor::new(
            x.shape(),
            x.data().iter().zip(&mask).map(|(v, m)| v * m).collect(),
        )?;
        self.mask = Some(Mask::Scaled(mask));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        match self.mask.take() {
            None => Err(Error::State("dropout backward called without a forward".into())),
            Some(Mask::Identity) => Ok(grad_out.clone()),
            Some(Mask::Scaled(mask)) => {
                if mask.len() != grad_out.len() {
                    return Err(Error::Shape(format!(
                        "dropout mask holds {} elements, gradient {:?}",
                        mask.len(),
                        grad_out.shape()
                    )));
                }
                Tensor::new(
                    grad_out.shape(),
                    grad_out.data().iter().zip(&mask).map(|(g, m)| g * m).collect(),
                )
            }
        }
    }
}
