use crate::error::{Error, Result};
use crate::tensor::{avg_pool2d_backward_into, avg_pool2d_into, global_avg_pool_into, Tensor};

/// 2×2 stride-2 average pooling over `batch×H×W×C`.
#[derive(Debug, Clone, Default)]
pub struct AvgPoolLayer {
    input_shape: Option<Vec<usize>>,
}

impl AvgPoolLayer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 4 || !x.shape()[1].is_multiple_of(2) || !x.shape()[2].is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "avg pool expects batch×H×W×C with even H, W; got {:?}",
                x.shape()
            )));
        }
        let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let per = (h / 2) * (w / 2) * c;
        let mut out = vec![0.0; b * per];
        for i in 0..b {
            avg_pool2d_into(x.row(i), h, w, c, &mut out[i * per..(i + 1) * per]);
        }
        self.input_shape = Some(x.shape().to_vec());
        Tensor::new(&[b, h / 2, w / 2, c], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .take()
            .ok_or_else(|| Error::State("avg pool backward called without a forward".into()))?;
        let (b, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        if grad_out.shape() != [b, h / 2, w / 2, c] {
            return Err(Error::dimension("avg_pool_backward", grad_out.shape(), &shape));
        }
        let per = h * w * c;
        let mut gi = vec![0.0; b * per];
        for i in 0..b {
            avg_pool2d_backward_into(grad_out.row(i), h, w, c, &mut gi[i * per..(i + 1) * per]);
        }
        Tensor::new(&shape, gi)
    }
}

/// Per-channel spatial mean, `batch×H×W×C → batch×C`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPoolLayer {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPoolLayer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 4 {
            return Err(Error::Shape(format!(
                "global avg pool expects batch×H×W×C, got {:?}",
                x.shape()
            )));
        }
        let (b, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let mut out = vec![0.0; b * c];
        for i in 0..b {
            global_avg_pool_into(x.row(i), h * w, c, &mut out[i * c..(i + 1) * c]);
        }
        self.input_shape = Some(x.shape().to_vec());
        Tensor::new(&[b, c], out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.take().ok_or_else(|| {
            Error::State("global avg pool backward called without a forward".into())
        })?;
        let (b, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        if grad_out.shape() != [b, c] {
            return Err(Error::dimension("global_avg_pool_backward", grad_out.shape(), &shape));
        }
        let inv = 1.0 / (h * w) as f64;
        let mut gi = Vec::with_capacity(b * h * w * c);
        for i in 0..b {
            let g = grad_out.row(i);
            for _ in 0..h * w {
                gi.extend(g.iter().map(|v| v * inv));
            }
        }
        Tensor::new(&shape, gi)
    }
}
