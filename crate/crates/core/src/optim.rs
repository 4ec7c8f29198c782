//! Cross-entropy loss with an L2 penalty, and the SGD and Adam update rules.

use crate::error::{Error, Result};
use crate::layers::ParamRole;
use crate::tensor::Tensor;

/// Probabilities are clamped to this floor before the log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub l2_lambda: f64,
    /// Penalize biases and batch-norm scale/shift too, not just weights.
    pub l2_all_params: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            l2_lambda: 1e-4,
            l2_all_params: false,
        }
    }
}

impl LossConfig {
    pub fn new(l2_lambda: f64) -> Result<Self> {
        if !(l2_lambda >= 0.0 && l2_lambda.is_finite()) {
            return Err(Error::Parameter(format!("l2_lambda must be >= 0, got {l2_lambda}")));
        }
        Ok(LossConfig {
            l2_lambda,
            l2_all_params: false,
        })
    }

    pub fn penalizes(&self, role: ParamRole) -> bool {
        self.l2_all_params || role == ParamRole::Weight
    }
}

fn check_targets(y_hat: &Tensor, y: &Tensor) -> Result<()> {
    if y_hat.rank() != 2 || y_hat.shape() != y.shape() {
        return Err(Error::dimension("cross_entropy", y_hat.shape(), y.shape()));
    }
    for (row, r) in (0..y.rows()).map(|i| (i, y.row(i))) {
        let ones = r.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || r.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Parameter(format!("target row {row} is not one-hot")));
        }
    }
    Ok(())
}

/// Mean cross-entropy data term `−(1/N) Σₙ yₙ·log ŷₙ`.
pub fn cross_entropy(y_hat: &Tensor, y: &Tensor) -> Result<f64> {
    check_targets(y_hat, y)?;
    for row in 0..y_hat.rows() {
        let sum: f64 = y_hat.row(row).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Probability { row, sum });
        }
    }
    let n = y_hat.rows() as f64;
    let total: f64 = y_hat
        .data()
        .iter()
        .zip(y.data())
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(LOG_FLOOR).ln())
        .sum();
    Ok(-total / n)
}

/// `(λ/2)·‖Θ‖²` over the tensors the config covers.
pub fn l2_penalty(params: &[(&Tensor, ParamRole)], cfg: &LossConfig) -> f64 {
    if cfg.l2_lambda == 0.0 {
        return 0.0;
    }
    let sq: f64 = params
        .iter()
        .filter(|(_, role)| cfg.penalizes(*role))
        .map(|(t, _)| t.squared_norm())
        .sum();
    0.5 * cfg.l2_lambda * sq
}

pub fn cross_entropy_l2(
    y_hat: &Tensor,
    y: &Tensor,
    params: &[(&Tensor, ParamRole)],
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(cross_entropy(y_hat, y)? + l2_penalty(params, cfg))
}

/// Gradient of the cross-entropy data term with respect to the logits that
/// feed a softmax: `(softmax(z) − y) / N`.
pub fn softmax_ce_grad(logits: &Tensor, y: &Tensor) -> Result<Tensor> {
    check_targets(logits, y)?;
    let mut g = crate::activations::softmax_rows(logits)?;
    let inv_n = 1.0 / logits.rows() as f64;
    for (gv, t) in g.data_mut().iter_mut().zip(y.data()) {
        *gv = (*gv - t) * inv_n;
    }
    Ok(g)
}

/// Plain gradient-descent update `w − η·∇`.
pub fn sgd_step(w: &Tensor, grad: &Tensor, eta: f64) -> Result<Tensor> {
    if w.shape() != grad.shape() {
        return Err(Error::dimension("sgd_step", w.shape(), grad.shape()));
    }
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!("learning rate must be > 0, got {eta}")));
    }
    Tensor::new(
        w.shape(),
        w.data().iter().zip(grad.data()).map(|(w, g)| w - eta * g).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments for an ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
    initialized: bool,
}

impl AdamState {
    /// Uninitialized state; call [`AdamState::init`] before stepping.
    pub fn new(config: AdamConfig) -> Result<Self> {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = config;
        if !(learning_rate > 0.0)
            || !(0.0..1.0).contains(&beta1)
            || !(0.0..1.0).contains(&beta2)
            || !(epsilon > 0.0)
        {
            return Err(Error::Parameter(format!("invalid Adam config {config:?}")));
        }
        Ok(AdamState {
            config,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
            initialized: false,
        })
    }

    pub fn for_params<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Result<Self> {
        let mut s = Self::new(config)?;
        s.init(params)?;
        Ok(s)
    }

    pub fn init<'a>(&mut self, params: impl IntoIterator<Item = &'a Tensor>) -> Result<()> {
        let zeros = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect::<Result<Vec<_>>>()?;
        self.second = zeros.clone();
        self.first = zeros;
        self.step = 0;
        self.initialized = true;
        Ok(())
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// One in-place update of every parameter.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        self.step_with_decay(params, grads, &[])
    }

    /// As [`AdamState::step`] with `decay[i]·θ` added to tensor `i`'s
    /// gradient first (the L2 term); missing entries mean no decay.
    pub fn step_with_decay(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], decay: &[f64]) -> Result<()> {
        if !self.initialized {
            return Err(Error::State("Adam state used before init".into()));
        }
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "Adam tracks {} tensors but got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != m.shape() || g.shape() != m.shape() {
                return Err(Error::dimension("adam_step", p.shape(), g.shape()));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 / (1.0 - beta1.powi(t));
        let c2 = 1.0 / (1.0 - beta2.powi(t));
        for (i, (((p, g), m), v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
            .enumerate()
        {
            let lambda = decay.get(i).copied().unwrap_or(0.0);
            for (((pw, &gw), mw), vw) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gw = gw + lambda * *pw;
                *mw = beta1 * *mw + (1.0 - beta1) * gw;
                *vw = beta2 * *vw + (1.0 - beta2) * gw * gw;
                let m_hat = *mw * c1;
                let v_hat = *vw * c2;
                *pw -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
