//! Self-normalization run: push standardized inputs through a deep dense
//! stack and record each layer's output mean and variance.

use crate::activations::ActivationKind;
use crate::error::Result;
use crate::layers::{DenseLayer, InitScheme, Mode};
use crate::rng::{Rng, DATA_STREAM};
use crate::tensor::Tensor;

pub const DEMO_LAYERS: usize = 10;
pub const DEMO_WIDTH: usize = 512;
pub const DEMO_SAMPLES: usize = 1024;
pub const MEAN_BOUND: f64 = 0.1;
pub const VAR_RANGE: (f64, f64) = (0.8, 1.25);

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMoments {
    pub layer: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeluDemoReport {
    pub activation: ActivationKind,
    pub layers: Vec<LayerMoments>,
}

impl SeluDemoReport {
    pub fn output(&self) -> &LayerMoments {
        self.layers.last().expect("at least one layer")
    }

    /// Whether the final output satisfies both moment bounds.
    pub fn within_bounds(&self) -> bool {
        let o = self.output();
        o.mean.abs() <= MEAN_BOUND && (VAR_RANGE.0..=VAR_RANGE.1).contains(&o.variance)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{} stack, LeCun-normal weights\n", self.activation);
        for m in &self.layers {
            s.push_str(&format!("layer {:>2}: mean {:+.4}  variance {:.4}\n", m.layer + 1, m.mean, m.variance));
        }
        s
    }
}

fn moments(t: &Tensor) -> (f64, f64) {
    let mean = t.mean();
    let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64;
    (mean, var)
}

/// `layers` dense layers of `width` units with LeCun-normal weights and
/// zero biases, fed `samples` standard-normal input rows.
pub fn selu_demo(
    activation: ActivationKind,
    layers: usize,
    width: usize,
    samples: usize,
    seed: u64,
) -> Result<SeluDemoReport> {
    let mut data_rng = Rng::stream(seed, DATA_STREAM);
    let mut h = Tensor::new(
        &[samples, width],
        (0..samples * width).map(|_| data_rng.standard_normal()).collect(),
    )?;
    let mut out = Vec::with_capacity(layers);
    for i in 0..layers {
        let mut rng = Rng::for_layer(seed, i);
        let mut layer = DenseLayer::init(width, width, Some(activation), InitScheme::LecunNormal, &mut rng)?;
        h = layer.forward(&h, Mode::Infer)?;
        let (mean, variance) = moments(&h);
        out.push(LayerMoments { layer: i, mean, variance });
    }
    Ok(SeluDemoReport {
        activation,
        layers: out,
    })
}
