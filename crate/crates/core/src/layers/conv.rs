use crate::activations::{act_map_with_grad, ActivationKind};
use crate::error::{Error, Result};
use crate::layers::init::InitScheme;
use crate::layers::Mode;
use crate::rng::Rng;
use crate::tensor::{col2im_add, gemm, im2col, kernel_dims, Tensor};

/// Same-padded stride-1 convolution over `batch×H×W×Cin` input, followed by
/// bias and activation. Lowered to GEMM through an im2col patch matrix.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    kernels: Tensor,
    bias: Tensor,
    activation: Option<ActivationKind>,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    input: Tensor,
    out_shape: Vec<usize>,
    /// f'(pre) per element; `None` for a linear layer.
    dact: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub kernels: Tensor,
    pub bias: Tensor,
}

impl ConvLayer {
    pub fn new(kernels: Tensor, bias: Tensor, activation: Option<ActivationKind>) -> Result<Self> {
        if kernels.rank() != 4 {
            return Err(Error::Shape(format!(
                "conv kernels must be kh×kw×Cin×Cout, got {:?}",
                kernels.shape()
            )));
        }
        let (kh, kw, cout) = kernel_dims(&kernels, kernels.shape()[2])?;
        if bias.shape() != [cout] {
            return Err(Error::dimension("conv bias", &[kh, kw, cout], bias.shape()));
        }
        Ok(ConvLayer {
            kernels,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn init(
        kernel: (usize, usize),
        cin: usize,
        cout: usize,
        activation: Option<ActivationKind>,
        scheme: InitScheme,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        let fan_in = kh * kw * cin;
        let sampler = scheme.sampler(fan_in)?;
        let kernels = Tensor::new(&[kh, kw, cin, cout], sampler.sample_n(rng, fan_in * cout))?;
        Self::new(kernels, Tensor::zeros(&[cout])?, activation)
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[0], self.kernels.shape()[1])
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[3]
    }

    pub fn activation(&self) -> Option<ActivationKind> {
        self.activation
    }

    pub fn kernels(&self) -> &Tensor {
        &self.kernels
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.kernels, &mut self.bias]
    }

    fn input_dims(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        if x.rank() != 4 || x.shape()[3] != self.in_channels() {
            return Err(Error::dimension("conv_forward", x.shape(), self.kernels.shape()));
        }
        Ok((x.shape()[0], x.shape()[1], x.shape()[2]))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let (batch, h, w) = self.input_dims(x)?;
        let (kh, kw) = self.kernel_size();
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let kcols = kh * kw * cin;
        let hw = h * w;
        let mut col = vec![0.0; hw * kcols];
        let mut pre = Vec::with_capacity(batch * hw * cout);
        for _ in 0..batch * hw {
            pre.extend_from_slice(self.bias.data());
        }
        for b in 0..batch {
            im2col(x.row(b), h, w, cin, kh, kw, &mut col);
            let out = &mut pre[b * hw * cout..(b + 1) * hw * cout];
            gemm(hw, kcols, cout, 1.0, &col, false, self.kernels.data(), false, 1.0, out);
        }
        let pre = Tensor::new(&[batch, h, w, cout], pre)?;
        let (out, dact) = match (self.activation, mode) {
            (Some(kind), Mode::Train) => {
                let (f, d) = act_map_with_grad(kind, &pre)?;
                (f, Some(d))
            }
            (Some(kind), Mode::Infer) => (pre.map(|v| kind.apply(v)), None),
            (None, _) => (pre, None),
        };
        self.cache = match mode {
            Mode::Train => Some(ConvCache {
                input: x.clone(),
                out_shape: out.shape().to_vec(),
                dact,
            }),
            Mode::Infer => None,
        };
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor, need_input: bool) -> Result<ConvGrads> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("conv backward called without a train-mode forward".into()))?;
        if grad_out.shape() != cache.out_shape.as_slice() {
            return Err(Error::dimension("conv_backward", grad_out.shape(), &cache.out_shape));
        }
        let (batch, h, w) = (cache.input.shape()[0], cache.input.shape()[1], cache.input.shape()[2]);
        let (kh, kw) = self.kernel_size();
        let (cin, cout) = (self.in_channels(), self.out_channels());
        let kcols = kh * kw * cin;
        let hw = h * w;

        let mut gk = vec![0.0; kcols * cout];
        let mut gb = vec![0.0; cout];
        let mut gi = if need_input {
            vec![0.0; batch * hw * cin]
        } else {
            Vec::new()
        };
        let mut col = vec![0.0; hw * kcols];
        let mut delta = vec![0.0; hw * cout];
        for b in 0..batch {
            let g = grad_out.row(b);
            match &cache.dact {
                Some(da) => {
                    for ((d, gv), dv) in delta.iter_mut().zip(g).zip(da.row(b)) {
                        *d = gv * dv;
                    }
                }
                None => delta.copy_from_slice(g),
            }
            for px in delta.chunks_exact(cout) {
                for (acc, d) in gb.iter_mut().zip(px) {
                    *acc += d;
                }
            }
            im2col(cache.input.row(b), h, w, cin, kh, kw, &mut col);
            gemm(kcols, hw, cout, 1.0, &col, true, &delta, false, 1.0, &mut gk);
            if need_input {
                // Reuse the patch buffer for d(loss)/d(col).
                gemm(hw, cout, kcols, 1.0, &delta, false, self.kernels.data(), true, 0.0, &mut col);
                col2im_add(&col, h, w, cin, kh, kw, &mut gi[b * hw * cin..(b + 1) * hw * cin]);
            }
        }
        let input = if need_input {
            Some(Tensor::new(cache.input.shape(), gi)?)
        } else {
            None
        };
        Ok(ConvGrads {
            input,
            kernels: Tensor::new(self.kernels.shape(), gk)?,
            bias: Tensor::new(&[cout], gb)?,
        })
    }
}
