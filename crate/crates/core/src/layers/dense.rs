use crate::activations::{act_map_with_grad, ActivationKind};
use crate::error::{Error, Result};
use crate::layers::init::InitScheme;
use crate::layers::Mode;
use crate::rng::Rng;
use crate::tensor::{gemm, Tensor};

/// Fully-connected layer `y = f(x Wᵀ + b)` over a `batch×n_in` input.
/// `activation = None` makes the layer linear.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    weights: Tensor,
    bias: Tensor,
    activation: Option<ActivationKind>,
    cache: Option<DenseCache>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Tensor,
    out_shape: Vec<usize>,
    /// f'(pre) per element; `None` for a linear layer.
    dact: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Option<ActivationKind>) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[0]] {
            return Err(Error::dimension("dense", weights.shape(), bias.shape()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn init(
        n_in: usize,
        n_out: usize,
        activation: Option<ActivationKind>,
        scheme: InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let sampler = scheme.sampler(n_in)?;
        let weights = Tensor::new(&[n_out, n_in], sampler.sample_n(rng, n_in * n_out))?;
        Self::new(weights, Tensor::zeros(&[n_out])?, activation)
    }

    pub fn n_in(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn activation(&self) -> Option<ActivationKind> {
        self.activation
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weights, &mut self.bias]
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.n_in() {
            return Err(Error::dimension("dense_forward", x.shape(), self.weights.shape()));
        }
        let (batch, n_in, n_out) = (x.shape()[0], self.n_in(), self.n_out());
        let mut pre = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            pre.extend_from_slice(self.bias.data());
        }
        gemm(batch, n_in, n_out, 1.0, x.data(), false, self.weights.data(), true, 1.0, &mut pre);
        let pre = Tensor::new(&[batch, n_out], pre)?;
        let (out, dact) = match (self.activation, mode) {
            (Some(kind), Mode::Train) => {
                let (f, d) = act_map_with_grad(kind, &pre)?;
                (f, Some(d))
            }
            (Some(kind), Mode::Infer) => (pre.map(|v| kind.apply(v)), None),
            (None, _) => (pre, None),
        };
        self.cache = match mode {
            Mode::Train => Some(DenseCache {
                input: x.clone(),
                out_shape: out.shape().to_vec(),
                dact,
            }),
            Mode::Infer => None,
        };
        Ok(out)
    }

    /// Gradients of a scalar loss given `grad_out = dL/dy`. Weight and bias
    /// gradients are summed over the batch.
    pub fn backward(&mut self, grad_out: &Tensor, need_input: bool) -> Result<DenseGrads> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("dense backward called without a train-mode forward".into()))?;
        if grad_out.shape() != cache.out_shape.as_slice() {
            return Err(Error::dimension("dense_backward", grad_out.shape(), &cache.out_shape));
        }
        let (batch, n_in, n_out) = (grad_out.shape()[0], self.n_in(), self.n_out());
        let delta: Vec<f64> = match &cache.dact {
            Some(d) => grad_out.data().iter().zip(d.data()).map(|(g, d)| g * d).collect(),
            None => grad_out.data().to_vec(),
        };

        let mut gw = vec![0.0; n_out * n_in];
        gemm(n_out, batch, n_in, 1.0, &delta, true, cache.input.data(), false, 0.0, &mut gw);

        let mut gb = vec![0.0; n_out];
        for row in delta.chunks_exact(n_out) {
            for (b, d) in gb.iter_mut().zip(row) {
                *b += d;
            }
        }

        let input = if need_input {
            let mut gi = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, 1.0, &delta, false, self.weights.data(), false, 0.0, &mut gi);
            Some(Tensor::new(&[batch, n_in], gi)?)
        } else {
            None
        };
        Ok(DenseGrads {
            input,
            weights: Tensor::new(&[n_out, n_in], gw)?,
            bias: Tensor::new(&[n_out], gb)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_relu_example() {
        let w = Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut layer =
            DenseLayer::new(w, Tensor::zeros(&[2]).unwrap(), Some(ActivationKind::RELU)).unwrap();
        let x = Tensor::new(&[1, 2], vec![1.0, -1.0]).unwrap();
        assert_eq!(layer.forward(&x, Mode::Infer).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_weights_give_activated_bias() {
        let b = Tensor::from_vec(vec![-0.5, 0.25, 2.0]).unwrap();
        let mut layer =
            DenseLayer::new(Tensor::zeros(&[3, 4]).unwrap(), b.clone(), Some(ActivationKind::ELU))
                .unwrap();
        let x = Tensor::new(&[2, 4], (0..8).map(f64::from).collect()).unwrap();
        let y = layer.forward(&x, Mode::Infer).unwrap();
        for r in 0..2 {
            for (j, &v) in y.row(r).iter().enumerate() {
                assert_eq!(v, ActivationKind::ELU.apply(b.data()[j]));
            }
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut layer = DenseLayer::init(
            3,
            2,
            Some(ActivationKind::GELU),
            InitScheme::LecunNormal,
            &mut Rng::new(1),
        )
        .unwrap();
        let x = Tensor::new(&[4, 3], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        layer.forward(&x, Mode::Train).unwrap();
        let g = layer.backward(&Tensor::zeros(&[4, 2]).unwrap(), true).unwrap();
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_layer_in_linear_regime_passes_gradient_through() {
        let mut layer = DenseLayer::new(
            Tensor::full(&[1, 1], 1.0).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            Some(ActivationKind::RELU),
        )
        .unwrap();
        let x = Tensor::new(&[3, 1], vec![0.5, 1.0, 2.0]).unwrap();
        layer.forward(&x, Mode::Train).unwrap();
        let go = Tensor::new(&[3, 1], vec![0.3, -0.7, 1.1]).unwrap();
        assert_eq!(layer.backward(&go, true).unwrap().input.unwrap(), go);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut layer = DenseLayer::init(2, 2, None, InitScheme::LecunNormal, &mut Rng::new(0)).unwrap();
        let err = layer.backward(&Tensor::zeros(&[1, 2]).unwrap(), true).unwrap_err();
        assert!(matches!(err, Error::State(_)));
        layer.forward(&Tensor::zeros(&[1, 2]).unwrap(), Mode::Infer).unwrap();
        assert!(layer.backward(&Tensor::zeros(&[1, 2]).unwrap(), true).is_err());
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut layer = DenseLayer::init(3, 2, None, InitScheme::LecunNormal, &mut Rng::new(0)).unwrap();
        let err = layer.forward(&Tensor::zeros(&[1, 4]).unwrap(), Mode::Train).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }
}
