//! Network construction (MLP and the VGG-style CNN) plus training and
//! evaluation.

mod train;

pub use train::{
    data_loss, evaluate, train, train_with_observer, EpochRecord, TrainConfig, TrainHistory,
    TrainOutcome,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::activations::{softmax_rows, ActivationKind};
use crate::error::{Error, Result};
use crate::layers::{
    checkpoint, AvgPoolLayer, BatchNormLayer, ConvLayer, DenseLayer, DropoutLayer,
    GlobalAvgPoolLayer, InitScheme, Layer, Mode, ParamRole,
};
use crate::rng::{Rng, DROPOUT_STREAM};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Mlp,
    Vgg9,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Vgg9 => "vgg9",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "vgg9" => Ok(ModelKind::Vgg9),
            other => Err(Error::Parameter(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// MLP widths including input and output, e.g. `[784, 2048, 2048, 512, 10]`.
    /// Ignored by `vgg9`.
    pub layer_widths: Vec<usize>,
    pub activation: ActivationKind,
    /// `vgg9` only.
    pub with_bn: bool,
    /// `vgg9` only.
    pub with_dropout: bool,
    /// `None` picks LeCun-normal for SELU and `U(-0.1, 0.1)` otherwise.
    pub init_scheme: Option<InitScheme>,
    /// `vgg9` input patch extent (mel bins × frames); both divisible by 8.
    pub input_hw: (usize, usize),
    /// `vgg9` class count.
    pub classes: usize,
}

impl ModelConfig {
    pub fn mlp(layer_widths: &[usize], activation: ActivationKind) -> Self {
        ModelConfig {
            kind: ModelKind::Mlp,
            layer_widths: layer_widths.to_vec(),
            activation,
            with_bn: false,
            with_dropout: false,
            init_scheme: None,
            input_hw: (128, 128),
            classes: layer_widths.last().copied().unwrap_or(10),
        }
    }

    pub fn vgg9(activation: ActivationKind, with_bn: bool, with_dropout: bool) -> Self {
        ModelConfig {
            kind: ModelKind::Vgg9,
            layer_widths: Vec::new(),
            activation,
            with_bn,
            with_dropout,
            init_scheme: None,
            input_hw: (128, 128),
            classes: 10,
        }
    }

    pub fn init(&self) -> InitScheme {
        self.init_scheme
            .unwrap_or_else(|| InitScheme::for_activation(self.activation))
    }

    /// Short architecture label, e.g. `784-2048-2048-512-10` or `vgg9[bn,dr]`.
    pub fn architecture_label(&self) -> String {
        match self.kind {
            ModelKind::Mlp => self
                .layer_widths
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join("-"),
            ModelKind::Vgg9 => {
                let opts: Vec<&str> = [(self.with_bn, "bn"), (self.with_dropout, "dr")]
                    .iter()
                    .filter(|(on, _)| *on)
                    .map(|(_, n)| *n)
                    .collect();
                if opts.is_empty() {
                    "vgg9[-]".into()
                } else {
                    format!("vgg9[{}]", opts.join(","))
                }
            }
        }
    }
}

/// A sequential network ending in linear logits; softmax is applied by the
/// loss during training and explicitly by [`Model::predict_proba`].
#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    /// Index one past the last layer of each architecture row.
    stage_ends: Vec<usize>,
    dropout_rng: Rng,
}

impl Model {
    /// Assembles a model from layers, checking that per-sample shapes chain
    /// from `input_shape` to a class vector.
    pub fn from_layers(layers: Vec<Layer>, input_shape: &[usize], seed: u64) -> Result<Self> {
        let stage_ends = (1..=layers.len()).collect();
        Self::with_stages(layers, input_shape, stage_ends, seed)
    }

    fn with_stages(
        layers: Vec<Layer>,
        input_shape: &[usize],
        stage_ends: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("model needs at least one layer".into()));
        }
        let model = Model {
            layers,
            input_shape: input_shape.to_vec(),
            stage_ends,
            dropout_rng: Rng::stream(seed, DROPOUT_STREAM),
        };
        let out = model.layer_shapes()?.pop().unwrap_or_default();
        if out.len() != 1 {
            return Err(Error::Shape(format!("model output must be a class vector, got {out:?}")));
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.layer_shapes().ok().and_then(|mut s| s.pop()).map_or(0, |s| s[0])
    }

    /// Per-sample output shape of every layer.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    /// Per-sample output shape at the end of each architecture row (each
    /// conv block / dense layer).
    pub fn stage_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let shapes = self.layer_shapes()?;
        Ok(self.stage_ends.iter().map(|&e| shapes[e - 1].clone()).collect())
    }

    pub fn describe(&self) -> Vec<String> {
        let mut start = 0;
        self.stage_ends
            .iter()
            .map(|&end| {
                let s = self.layers[start..end]
                    .iter()
                    .map(Layer::describe)
                    .collect::<Vec<_>>()
                    .join(" - ");
                start = end;
                s
            })
            .collect()
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = Rng::stream(seed, DROPOUT_STREAM);
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            let mut expect = vec![x.shape().first().copied().unwrap_or(0)];
            expect.extend(&self.input_shape);
            return Err(Error::dimension("model input", x.shape(), &expect));
        }
        Ok(())
    }

    /// Logits for a `batch×input_shape` tensor.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        let mut layers = self.layers.iter_mut();
        let first = layers.next().expect("non-empty by construction");
        let mut h = first.forward(x, mode, &mut self.dropout_rng)?;
        for layer in layers {
            h = layer.forward(&h, mode, &mut self.dropout_rng)?;
        }
        Ok(h)
    }

    /// Class probabilities in infer mode.
    pub fn predict_proba(&mut self, x: &Tensor) -> Result<Tensor> {
        let logits = self.forward(x, Mode::Infer)?;
        softmax_rows(&logits)
    }

    /// Backpropagates `dL/dlogits` through the last train-mode forward and
    /// returns parameter gradients aligned with [`Model::params`].
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<Vec<Tensor>> {
        let (grads, _) = self.backward_with_input(grad_logits, false)?;
        Ok(grads)
    }

    /// As [`Model::backward`], optionally also returning `dL/dinput`.
    pub fn backward_with_input(
        &mut self,
        grad_logits: &Tensor,
        need_input: bool,
    ) -> Result<(Vec<Tensor>, Option<Tensor>)> {
        let n = self.layers.len();
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(n);
        let mut g = grad_logits.clone();
        let mut input_grad = None;
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let need = i > 0 || need_input;
            let (gi, pg) = layer.backward(&g, need)?;
            per_layer.push(pg);
            match gi {
                Some(gi) if i > 0 => g = gi,
                Some(gi) => input_grad = Some(gi),
                None => {}
            }
        }
        per_layer.reverse();
        Ok((per_layer.into_iter().flatten().collect(), input_grad))
    }

    pub fn params(&self) -> Vec<(&Tensor, ParamRole)> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(t, _)| t.len()).sum()
    }

    /// Copy of every parameter and buffer, in checkpoint order.
    pub fn state(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(Layer::state)
            .cloned()
            .collect()
    }

    pub fn load_state(&mut self, state: &[Tensor]) -> Result<()> {
        let mut slots: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(Layer::state_mut).collect();
        if slots.len() != state.len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} tensors, model expects {}",
                state.len(),
                slots.len()
            )));
        }
        for (slot, t) in slots.iter().zip(state) {
            if slot.shape() != t.shape() {
                return Err(Error::dimension("load_state", slot.shape(), t.shape()));
            }
        }
        for (slot, t) in slots.iter_mut().zip(state) {
            slot.data_mut().copy_from_slice(t.data());
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(path, &self.state())
    }

    pub fn load_checkpoint(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.load_state(&checkpoint::load(path)?)
    }
}

/// Dense stack: `cfg.activation` on every hidden layer, linear output.
pub fn build_mlp(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    if cfg.kind != ModelKind::Mlp {
        return Err(Error::Parameter("build_mlp needs kind = mlp".into()));
    }
    if cfg.with_bn || cfg.with_dropout {
        return Err(Error::Parameter(
            "the MLP is a plain dense stack; batch norm and dropout apply to vgg9 only".into(),
        ));
    }
    let widths = &cfg.layer_widths;
    if widths.len() < 3 {
        return Err(Error::Parameter(format!(
            "MLP needs at least one hidden layer, got widths {widths:?}"
        )));
    }
    if widths.contains(&0) {
        return Err(Error::Parameter(format!("MLP widths must be positive: {widths:?}")));
    }
    let scheme = cfg.init();
    let n = widths.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let act = (i + 1 < n).then_some(cfg.activation);
            let mut rng = Rng::for_layer(seed, i);
            DenseLayer::init(widths[i], widths[i + 1], act, scheme, &mut rng).map(Layer::Dense)
        })
        .collect::<Result<Vec<_>>>()?;
    Model::from_layers(layers, &widths[..1], seed)
}

/// Convolutional blocks as `(kernel, out_channels, pool, dropout_rate)`;
/// `pool = Some(true)` is 2×2 average pooling, `Some(false)` global average
/// pooling, `None` no pooling.
const VGG9_BLOCKS: [(usize, usize, Option<bool>, f64); 6] = [
    (9, 32, Some(true), 0.1),
    (7, 64, Some(true), 0.2),
    (5, 128, None, 0.3),
    (5, 128, Some(true), 0.3),
    (3, 256, None, 0.4),
    (3, 256, Some(false), 0.4),
];
const VGG9_HEAD: [(usize, f64); 2] = [(512, 0.5), (1024, 0.5)];

/// The nine-layer CNN: six `Cv - act - [BN] - [pool] - [Dr]` blocks, then
/// `FC(512) - act - [Dr]`, `FC(1024) - act - [Dr]`, `FC(classes)`.
pub fn build_vgg9(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    if cfg.kind != ModelKind::Vgg9 {
        return Err(Error::Parameter("build_vgg9 needs kind = vgg9".into()));
    }
    let (h, w) = cfg.input_hw;
    if h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
        return Err(Error::Parameter(format!(
            "vgg9 input extent must be a positive multiple of 8, got {h}x{w}"
        )));
    }
    if cfg.classes < 2 {
        return Err(Error::Parameter("vgg9 needs at least 2 classes".into()));
    }
    let scheme = cfg.init();
    let act = Some(cfg.activation);
    let mut layers = Vec::new();
    let mut stage_ends = Vec::new();
    let mut cin = 1;
    for (k, cout, pool, rate) in VGG9_BLOCKS {
        let mut rng = Rng::for_layer(seed, layers.len());
        layers.push(Layer::Conv(ConvLayer::init((k, k), cin, cout, act, scheme, &mut rng)?));
        if cfg.with_bn {
            layers.push(Layer::BatchNorm(BatchNormLayer::new(cout)?));
        }
        match pool {
            Some(true) => layers.push(Layer::AvgPool(AvgPoolLayer::new())),
            Some(false) => layers.push(Layer::GlobalAvgPool(GlobalAvgPoolLayer::new())),
            None => {}
        }
        if cfg.with_dropout {
            layers.push(Layer::Dropout(DropoutLayer::new(rate)?));
        }
        stage_ends.push(layers.len());
        cin = cout;
    }
    let mut n_in = cin;
    for (n_out, rate) in VGG9_HEAD {
        let mut rng = Rng::for_layer(seed, layers.len());
        layers.push(Layer::Dense(DenseLayer::init(n_in, n_out, act, scheme, &mut rng)?));
        if cfg.with_dropout {
            layers.push(Layer::Dropout(DropoutLayer::new(rate)?));
        }
        stage_ends.push(layers.len());
        n_in = n_out;
    }
    let mut rng = Rng::for_layer(seed, layers.len());
    layers.push(Layer::Dense(DenseLayer::init(n_in, cfg.classes, None, scheme, &mut rng)?));
    stage_ends.push(layers.len());
    Model::with_stages(layers, &[h, w, 1], stage_ends, seed)
}

pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    match cfg.kind {
        ModelKind::Mlp => build_mlp(cfg, seed),
        ModelKind::Vgg9 => build_vgg9(cfg, seed),
    }
}
