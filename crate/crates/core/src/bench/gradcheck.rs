//! Central finite-difference checks of every analytic derivative.

use crate::activations::{softmax_rows, ActivationKind};
use crate::error::{Error, Result};
use crate::layers::{
    BatchNormLayer, ConvLayer, DenseLayer, DropoutLayer, InitScheme, Layer, Mode,
};
use crate::optim::{cross_entropy, softmax_ce_grad};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-5;
/// Below this magnitude the comparison is absolute.
pub const SMALL_MAGNITUDE: f64 = 1e-3;
pub const ABS_TOL: f64 = 1e-8;
/// Grid points this close to a kink are skipped.
pub const KINK_GUARD: f64 = 1e-4;
pub const LAYER_SEEDS: u64 = 20;

/// Error of an analytic value against a numeric one; values under
/// `SMALL_MAGNITUDE` are compared absolutely and scaled so the same
/// threshold applies.
pub fn scaled_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let mag = analytic.abs().max(numeric.abs());
    if mag < SMALL_MAGNITUDE {
        diff / ABS_TOL * REL_TOL
    } else {
        diff / mag
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub points: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error <= REL_TOL && self.points > 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            s.push_str(&format!(
                "{:<6} {:<18} max rel err {:.3e} over {} points\n",
                if r.passed() { "PASS" } else { "FAIL" },
                r.name,
                r.max_error,
                r.points
            ));
        }
        s
    }
}

/// Deliberate corruption of an analytic derivative, used to confirm the
/// checker catches it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Perturbation {
    /// Multiplies the GELU derivative by `1 + gelu_scale`.
    pub gelu_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerCheck {
    Dense,
    Conv,
    BatchNorm,
    Dropout,
    SoftmaxCe,
}

impl LayerCheck {
    pub const ALL: [LayerCheck; 5] = [
        LayerCheck::Dense,
        LayerCheck::Conv,
        LayerCheck::BatchNorm,
        LayerCheck::Dropout,
        LayerCheck::SoftmaxCe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayerCheck::Dense => "dense",
            LayerCheck::Conv => "conv",
            LayerCheck::BatchNorm => "batchnorm",
            LayerCheck::Dropout => "dropout",
            LayerCheck::SoftmaxCe => "softmax-ce",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradcheckTarget {
    All,
    Activation(ActivationKind),
    Layer(LayerCheck),
}

impl std::str::FromStr for GradcheckTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(GradcheckTarget::All);
        }
        if let Some(l) = LayerCheck::ALL.iter().find(|l| l.name() == s) {
            return Ok(GradcheckTarget::Layer(*l));
        }
        s.parse().map(GradcheckTarget::Activation).map_err(|_| {
            Error::Parameter(format!(
                "unknown gradcheck target '{s}' (all, an activation, dense, conv, batchnorm, dropout, softmax-ce)"
            ))
        })
    }
}

fn has_kink(kind: ActivationKind) -> bool {
    !matches!(kind, ActivationKind::Tanh | ActivationKind::Sigmoid | ActivationKind::Gelu)
}

/// Compares the analytic derivative with `(f(x+h) − f(x−h)) / 2h` on the
/// grid `−5, −4.99, …, 5`.
pub fn check_activation(kind: ActivationKind, perturb: Perturbation) -> CheckResult {
    let mut max_error: f64 = 0.0;
    let mut points = 0;
    for i in -500..=500 {
        let x = i as f64 / 100.0;
        if has_kink(kind) && x.abs() < KINK_GUARD {
            continue;
        }
        let numeric = (kind.apply(x + FD_STEP) - kind.apply(x - FD_STEP)) / (2.0 * FD_STEP);
        let mut analytic = kind.derivative(x);
        if kind == ActivationKind::Gelu {
            analytic *= 1.0 + perturb.gelu_scale;
        }
        max_error = max_error.max(scaled_error(analytic, numeric));
        points += 1;
    }
    CheckResult {
        name: kind.name().into(),
        max_error,
        points,
    }
}

fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.standard_normal()).collect()).expect("positive shape")
}

/// Loss `Σ r ⊙ layer(x)` with random weights `r`, the layer in train mode
/// and its dropout stream restarted for every evaluation.
fn layer_loss(layer: &Layer, x: &Tensor, r: &Tensor, rng_seed: u64) -> Result<f64> {
    let mut l = layer.clone();
    let y = l.forward(x, Mode::Train, &mut Rng::new(rng_seed))?;
    Ok(y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
}

fn check_layer_instance(layer: Layer, x: Tensor, seed: u64) -> Result<(f64, usize)> {
    let rng_seed = seed ^ 0xD1CE;
    let mut probe = layer.clone();
    let y = probe.forward(&x, Mode::Train, &mut Rng::new(rng_seed))?;
    let r = random_tensor(y.shape(), &mut Rng::new(seed.wrapping_add(77)));
    let (gx, gparams) = probe.backward(&r, true)?;
    let gx = gx.ok_or_else(|| Error::State("missing input gradient".into()))?;

    let mut max_err: f64 = 0.0;
    let mut points = 0;
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += FD_STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= FD_STEP;
        let num = (layer_loss(&layer, &xp, &r, rng_seed)? - layer_loss(&layer, &xm, &r, rng_seed)?) / (2.0 * FD_STEP);
        max_err = max_err.max(scaled_error(gx.data()[i], num));
        points += 1;
    }
    let n_params = layer.params().len();
    for p in 0..n_params {
        for i in 0..layer.params()[p].0.len() {
            let mut lp = layer.clone();
            lp.params_mut()[p].data_mut()[i] += FD_STEP;
            let mut lm = layer.clone();
            lm.params_mut()[p].data_mut()[i] -= FD_STEP;
            let num = (layer_loss(&lp, &x, &r, rng_seed)? - layer_loss(&lm, &x, &r, rng_seed)?) / (2.0 * FD_STEP);
            max_err = max_err.max(scaled_error(gparams[p].data()[i], num));
            points += 1;
        }
    }
    Ok((max_err, points))
}

/// Keeps pre-activations away from kinks so finite differences never
/// straddle one.
fn nudge_from_kinks(layer: &Layer, x: &Tensor) -> Result<Layer> {
    let mut l = layer.clone();
    for _ in 0..50 {
        let z = match &l {
            Layer::Dense(d) => DenseLayer::new(d.weights().clone(), d.bias().clone(), None)?.forward(x, Mode::Infer)?,
            Layer::Conv(c) => ConvLayer::new(c.kernels().clone(), c.bias().clone(), None)?.forward(x, Mode::Infer)?,
            _ => return Ok(l),
        };
        if z.data().iter().all(|v| v.abs() >= 1e-3) {
            return Ok(l);
        }
        l.params_mut()[1].data_mut().iter_mut().for_each(|v| *v += 7.3e-3);
    }
    Err(Error::State("could not move pre-activations off the kink".into()))
}

fn instance(kind: LayerCheck, seed: u64) -> Result<(Layer, Tensor)> {
    let mut rng = Rng::new(seed);
    let acts = ActivationKind::ALL;
    let act = acts[(seed as usize) % acts.len()];
    let scheme = InitScheme::Uniform { scale: 0.5 };
    Ok(match kind {
        LayerCheck::Dense => {
            let mut d = DenseLayer::init(5, 4, Some(act), scheme, &mut rng)?;
            let bias = random_tensor(&[4], &mut rng).map(|v| 0.1 * v);
            d = DenseLayer::new(d.weights().clone(), bias, d.activation())?;
            (Layer::Dense(d), random_tensor(&[3, 5], &mut rng))
        }
        LayerCheck::Conv => {
            let k = if seed.is_multiple_of(2) { (3, 3) } else { (3, 5) };
            let mut c = ConvLayer::init(k, 2, 3, Some(act), scheme, &mut rng)?;
            let bias = random_tensor(&[3], &mut rng).map(|v| 0.1 * v);
            c = ConvLayer::new(c.kernels().clone(), bias, c.activation())?;
            (Layer::Conv(c), random_tensor(&[2, 5, 4, 2], &mut rng))
        }
        LayerCheck::BatchNorm => {
            let mut bn = BatchNormLayer::new(3)?;
            bn.set_affine(
                random_tensor(&[3], &mut rng).map(|v| 1.0 + 0.3 * v),
                random_tensor(&[3], &mut rng).map(|v| 0.3 * v),
            )?;
            let shape: &[usize] = if seed.is_multiple_of(2) { &[6, 3] } else { &[3, 2, 2, 3] };
            (Layer::BatchNorm(bn), random_tensor(shape, &mut rng))
        }
        LayerCheck::Dropout => (Layer::Dropout(DropoutLayer::new(0.3)?), random_tensor(&[4, 6], &mut rng)),
        LayerCheck::SoftmaxCe => unreachable!("checked separately"),
    })
}

fn check_softmax_ce(seed: u64) -> Result<(f64, usize)> {
    let mut rng = Rng::new(seed);
    let z = random_tensor(&[3, 10], &mut rng).map(|v| 2.0 * v);
    let labels: Vec<usize> = (0..3).map(|_| (rng.next_u64() % 10) as usize).collect();
    let y = crate::dataio::one_hot(&labels, 10)?;
    let g = softmax_ce_grad(&z, &y)?;
    let loss = |z: &Tensor| -> Result<f64> { cross_entropy(&softmax_rows(z)?, &y) };
    let mut max_err: f64 = 0.0;
    for i in 0..z.len() {
        let mut zp = z.clone();
        zp.data_mut()[i] += FD_STEP;
        let mut zm = z.clone();
        zm.data_mut()[i] -= FD_STEP;
        let num = (loss(&zp)? - loss(&zm)?) / (2.0 * FD_STEP);
        max_err = max_err.max(scaled_error(g.data()[i], num));
    }
    Ok((max_err, z.len()))
}

/// Runs the check on `LAYER_SEEDS` random instances.
pub fn check_layer(kind: LayerCheck) -> Result<CheckResult> {
    let mut max_error: f64 = 0.0;
    let mut points = 0;
    for seed in 0..LAYER_SEEDS {
        let (err, n) = if kind == LayerCheck::SoftmaxCe {
            check_softmax_ce(seed)?
        } else {
            let (layer, x) = instance(kind, seed)?;
            let layer = nudge_from_kinks(&layer, &x)?;
            check_layer_instance(layer, x, seed)?
        };
        max_error = max_error.max(err);
        points += n;
    }
    Ok(CheckResult {
        name: kind.name().into(),
        max_error,
        points,
    })
}

pub fn run_gradcheck(target: GradcheckTarget, perturb: Perturbation) -> Result<GradcheckReport> {
    let mut results = Vec::new();
    match target {
        GradcheckTarget::Activation(k) => results.push(check_activation(k, perturb)),
        GradcheckTarget::Layer(l) => results.push(check_layer(l)?),
        GradcheckTarget::All => {
            for k in ActivationKind::ALL {
                results.push(check_activation(k, perturb));
            }
            for l in LayerCheck::ALL {
                results.push(check_layer(l)?);
            }
        }
    }
    Ok(GradcheckReport { results })
}
