use std::time::Instant;

use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::models::Model;
use crate::optim::{cross_entropy, l2_penalty, softmax_ce_grad, AdamConfig, AdamState, LossConfig};
use crate::rng::{Rng, SHUFFLE_STREAM};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub l2_lambda: f64,
    pub l2_all_params: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 100,
            epochs: 100,
            seed: 0,
            l2_lambda: 1e-4,
            l2_all_params: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be > 0".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Parameter(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        Ok(())
    }

    fn loss(&self) -> LossConfig {
        LossConfig {
            l2_lambda: self.l2_lambda,
            l2_all_params: self.l2_all_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over batches of data term plus L2 penalty, measured in train mode.
    pub train_loss: f64,
    pub eval_accuracy: f64,
    /// Wall-clock seconds of the update loop (evaluation excluded).
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_eval_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub test_accuracy: Option<f64>,
}

impl TrainHistory {
    pub fn mean_seconds_per_epoch(&self) -> Option<(f64, f64)> {
        let n = self.epochs.len();
        if n == 0 {
            return None;
        }
        let mean = self.epochs.iter().map(|e| e.seconds).sum::<f64>() / n as f64;
        let var = if n > 1 {
            self.epochs.iter().map(|e| (e.seconds - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Some((mean, var.sqrt()))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    /// Model state at the best eval accuracy (earliest on ties); the initial
    /// state when no epoch ran.
    pub best_state: Vec<Tensor>,
}

pub fn train(
    model: &mut Model,
    train_set: &LabeledDataset,
    eval_set: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(model, train_set, eval_set, cfg, |_| {})
}

/// Adam on shuffled mini-batches, evaluating once per epoch. On return the
/// model holds the final weights; `best_state` holds the selected ones.
///
/// A trailing batch of one sample is skipped when the model has batch norm.
pub fn train_with_observer(
    model: &mut Model,
    train_set: &LabeledDataset,
    eval_set: &LabeledDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(model, train_set)?;
    check_compatible(model, eval_set)?;
    if cfg.batch_size > train_set.len() {
        return Err(Error::Parameter(format!(
            "batch_size {} exceeds training set size {}",
            cfg.batch_size,
            train_set.len()
        )));
    }
    model.reseed_dropout(cfg.seed);
    let loss_cfg = cfg.loss();
    let mut adam = AdamState::for_params(
        AdamConfig::with_learning_rate(cfg.learning_rate),
        model.params().into_iter().map(|(t, _)| t),
    )?;
    let mut shuffle = Rng::stream(cfg.seed, SHUFFLE_STREAM);
    let skip_singletons = model.has_batch_norm();
    let decay: Vec<f64> = model
        .params()
        .iter()
        .map(|&(_, role)| if loss_cfg.penalizes(role) { loss_cfg.l2_lambda } else { 0.0 })
        .collect();

    let mut history = TrainHistory::default();
    let mut best_state = model.state();
    for epoch in 0..cfg.epochs {
        let order = shuffle.permutation(train_set.len());
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            if skip_singletons && idx.len() == 1 {
                continue;
            }
            let (x, y) = train_set.batch(idx)?;
            let logits = model.forward(&x, Mode::Train)?;
            let grad_logits = softmax_ce_grad(&logits, &y)?;
            let probs = crate::activations::softmax_rows(&logits)?;
            loss_sum += cross_entropy(&probs, &y)? + l2_penalty(&model.params(), &loss_cfg);
            batches += 1;

            let grads = model.backward(&grad_logits)?;
            let mut params = model.params_mut();
            adam.step_with_decay(&mut params, &grads, &decay)?;
        }
        let seconds = start.elapsed().as_secs_f64();
        let train_loss = loss_sum / batches.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::State(format!("training diverged: loss {train_loss} at epoch {epoch}")));
        }
        let eval_accuracy = evaluate(model, eval_set)?;
        if history.best_eval_accuracy.is_none_or(|b| eval_accuracy > b) {
            history.best_eval_accuracy = Some(eval_accuracy);
            history.best_epoch = Some(epoch);
            best_state = model.state();
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            eval_accuracy,
            seconds,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(TrainOutcome {
        history,
        best_state,
    })
}

fn check_compatible(model: &Model, set: &LabeledDataset) -> Result<()> {
    if set.sample_shape() != model.input_shape() {
        return Err(Error::dimension("dataset vs model input", set.sample_shape(), model.input_shape()));
    }
    if set.class_count() != model.classes() {
        return Err(Error::Parameter(format!(
            "dataset has {} classes, model outputs {}",
            set.class_count(),
            model.classes()
        )));
    }
    Ok(())
}

fn eval_batch_size(sample_len: usize) -> usize {
    (262_144 / sample_len.max(1)).clamp(1, 256)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose softmax argmax (lowest index on ties) equals
/// the label, with every layer in infer mode.
pub fn evaluate(model: &mut Model, set: &LabeledDataset) -> Result<f64> {
    check_compatible(model, set)?;
    let bs = eval_batch_size(set.sample_len());
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(bs) {
        let (x, _) = set.batch(chunk)?;
        let p = model.predict_proba(&x)?;
        for (r, &i) in chunk.iter().enumerate() {
            if argmax(p.row(r)) == set.labels()[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Mean cross-entropy data term over the set, in infer mode.
pub fn data_loss(model: &mut Model, set: &LabeledDataset) -> Result<f64> {
    check_compatible(model, set)?;
    let bs = eval_batch_size(set.sample_len());
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(bs) {
        let (x, y) = set.batch(chunk)?;
        let p = model.predict_proba(&x)?;
        total += cross_entropy(&p, &y)? * chunk.len() as f64;
    }
    Ok(total / set.len() as f64)
}
