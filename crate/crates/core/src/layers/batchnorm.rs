use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization over the last axis of a
/// `batch×…×C` input. Train mode normalizes with batch statistics and updates
/// the running mean and (unbiased) variance as
/// `running = momentum·running + (1 − momentum)·batch`; infer mode uses the
/// running statistics.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    epsilon: f64,
    momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    shape: Vec<usize>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub input: Option<Tensor>,
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl BatchNormLayer {
    pub fn new(channels: usize) -> Result<Self> {
        Self::with_hyperparameters(channels, BN_EPSILON, BN_MOMENTUM)
    }

    pub fn with_hyperparameters(channels: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::Parameter(format!(
                "batch norm needs epsilon > 0 and momentum in [0, 1), got {epsilon}, {momentum}"
            )));
        }
        Ok(BatchNormLayer {
            gamma: Tensor::full(&[channels], 1.0)?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], 1.0)?,
            epsilon,
            momentum,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &Tensor {
        &self.gamma
    }

    pub fn beta(&self) -> &Tensor {
        &self.beta
    }

    pub fn running_mean(&self) -> &Tensor {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Tensor {
        &self.running_var
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub(crate) fn state_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    pub fn set_affine(&mut self, gamma: Tensor, beta: Tensor) -> Result<()> {
        if gamma.shape() != self.gamma.shape() || beta.shape() != self.beta.shape() {
            return Err(Error::dimension("batchnorm affine", gamma.shape(), beta.shape()));
        }
        self.gamma = gamma;
        self.beta = beta;
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = self.channels();
        if x.rank() < 2 || x.shape()[x.rank() - 1] != c {
            return Err(Error::dimension("batchnorm_forward", x.shape(), &[c]));
        }
        let m = x.len() / c;
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        match mode {
            Mode::Train => {
                if x.shape()[0] < 2 {
                    return Err(Error::DegenerateBatch(x.shape()[0]));
                }
                let mut mean = vec![0.0; c];
                for px in x.data().chunks_exact(c) {
                    for (a, v) in mean.iter_mut().zip(px) {
                        *a += v;
                    }
                }
                mean.iter_mut().for_each(|a| *a /= m as f64);
                let mut var = vec![0.0; c];
                for px in x.data().chunks_exact(c) {
                    for ((a, v), mu) in var.iter_mut().zip(px).zip(&mean) {
                        *a += (v - mu) * (v - mu);
                    }
                }
                var.iter_mut().for_each(|a| *a /= m as f64);
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

                let mut xhat = Vec::with_capacity(x.len());
                let mut out = Vec::with_capacity(x.len());
                for px in x.data().chunks_exact(c) {
                    for ch in 0..c {
                        let h = (px[ch] - mean[ch]) * inv_std[ch];
                        xhat.push(h);
                        out.push(gamma[ch] * h + beta[ch]);
                    }
                }

                let unbias = m as f64 / (m as f64 - 1.0);
                let mo = self.momentum;
                for (r, v) in self.running_mean.data_mut().iter_mut().zip(&mean) {
                    *r = mo * *r + (1.0 - mo) * v;
                }
                for (r, v) in self.running_var.data_mut().iter_mut().zip(&var) {
                    *r = mo * *r + (1.0 - mo) * v * unbias;
                }
                self.cache = Some(BnCache {
                    shape: x.shape().to_vec(),
                    xhat,
                    inv_std,
                });
                Tensor::new(x.shape(), out)
            }
            Mode::Infer => {
                let rm = self.running_mean.data();
                let inv_std: Vec<f64> = self
                    .running_var
                    .data()
                    .iter()
                    .map(|v| 1.0 / (v + self.epsilon).sqrt())
                    .collect();
                let mut out = Vec::with_capacity(x.len());
                for px in x.data().chunks_exact(c) {
                    for ch in 0..c {
                        out.push(gamma[ch] * (px[ch] - rm[ch]) * inv_std[ch] + beta[ch]);
                    }
                }
                self.cache = None;
                Tensor::new(x.shape(), out)
            }
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor, need_input: bool) -> Result<BnGrads> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::State("batchnorm backward called without a train-mode forward".into())
        })?;
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(Error::dimension("batchnorm_backward", grad_out.shape(), &cache.shape));
        }
        let c = self.channels();
        let m = grad_out.len() / c;
        let mut g_gamma = vec![0.0; c];
        let mut g_beta = vec![0.0; c];
        for (g, h) in grad_out.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                g_beta[ch] += g[ch];
                g_gamma[ch] += g[ch] * h[ch];
            }
        }
        let input = if need_input {
            // dx = γ/σ · (dy − mean(dy) − x̂·mean(dy·x̂))
            let inv_m = 1.0 / m as f64;
            let gamma = self.gamma.data();
            let mut gi = Vec::with_capacity(grad_out.len());
            for (g, h) in grad_out.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
                for ch in 0..c {
                    let v = g[ch] - g_beta[ch] * inv_m - h[ch] * g_gamma[ch] * inv_m;
                    gi.push(gamma[ch] * cache.inv_std[ch] * v);
                }
            }
            Some(Tensor::new(&cache.shape, gi)?)
        } else {
            None
        };
        Ok(BnGrads {
            input,
            gamma: Tensor::new(&[c], g_gamma)?,
            beta: Tensor::new(&[c], g_beta)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn channel_stats(y: &Tensor, c: usize) -> Vec<(f64, f64)> {
        let m = (y.len() / c) as f64;
        (0..c)
            .map(|ch| {
                let vals: Vec<f64> = y.data().iter().skip(ch).step_by(c).copied().collect();
                let mean = vals.iter().sum::<f64>() / m;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
                (mean, var)
            })
            .collect()
    }

    fn random_input(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = Rng::new(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| 3.0 + 2.5 * rng.standard_normal()).collect()).unwrap()
    }

    #[test]
    fn normalizes_per_channel() {
        let mut bn = BatchNormLayer::new(3).unwrap();
        let x = random_input(&[8, 5, 3], 1).map(|v| 4.0 * v);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (mean, var) in channel_stats(&y, 3) {
            assert!(mean.abs() <= 1e-10, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-6, "var {var}");
        }
    }

    #[test]
    fn affine_shift_and_scale() {
        let mut bn = BatchNormLayer::new(2).unwrap();
        bn.set_affine(Tensor::full(&[2], 2.0).unwrap(), Tensor::full(&[2], 3.0).unwrap())
            .unwrap();
        let y = bn.forward(&random_input(&[16, 2], 2), Mode::Train).unwrap();
        for (mean, var) in channel_stats(&y, 2) {
            assert!((mean - 3.0).abs() <= 1e-10);
            assert!((var.sqrt() - 2.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn batch_of_one_is_degenerate() {
        let mut bn = BatchNormLayer::new(2).unwrap();
        let err = bn.forward(&Tensor::zeros(&[1, 2]).unwrap(), Mode::Train).unwrap_err();
        assert!(matches!(err, Error::DegenerateBatch(1)));
        assert!(bn.forward(&Tensor::zeros(&[1, 2]).unwrap(), Mode::Infer).is_ok());
    }

    #[test]
    fn running_stats_track_the_distribution() {
        let mut bn = BatchNormLayer::new(1).unwrap();
        for seed in 0..200 {
            bn.forward(&random_input(&[32, 1], seed), Mode::Train).unwrap();
        }
        assert!((bn.running_mean().data()[0] - 3.0).abs() < 0.3);
        assert!((bn.running_var().data()[0] - 6.25).abs() < 1.0);
        let y = bn.forward(&random_input(&[4096, 1], 999), Mode::Infer).unwrap();
        let (mean, var) = channel_stats(&y, 1)[0];
        assert!(mean.abs() < 0.15, "mean {mean}");
        assert!((var - 1.0).abs() < 0.2, "var {var}");
        assert!(bn.running_var().data().iter().all(|&v| v >= 0.0));
    }
}
