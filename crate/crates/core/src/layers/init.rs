use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Weight initialization scheme. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// `N(0, sqrt(1 / fan_in))`.
    LecunNormal,
    /// `U(-scale, +scale)`.
    Uniform { scale: f64 },
}

impl InitScheme {
    pub const UNIFORM_DEFAULT: InitScheme = InitScheme::Uniform { scale: 0.1 };

    /// LeCun-normal for SELU networks, `U(-0.1, 0.1)` otherwise.
    pub fn for_activation(kind: ActivationKind) -> Self {
        if kind.is_selu() {
            InitScheme::LecunNormal
        } else {
            Self::UNIFORM_DEFAULT
        }
    }

    pub fn sampler(&self, fan_in: usize) -> Result<WeightSampler> {
        match *self {
            InitScheme::LecunNormal => lecun_normal_init(fan_in),
            InitScheme::Uniform { scale } => uniform_init(scale),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::LecunNormal => "lecun",
            InitScheme::Uniform { .. } => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSampler {
    Normal { std_dev: f64 },
    Uniform { scale: f64 },
}

impl WeightSampler {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            WeightSampler::Normal { std_dev } => std_dev * rng.standard_normal(),
            WeightSampler::Uniform { scale } => rng.uniform_range(-scale, scale),
        }
    }

    pub fn sample_n(&self, rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    pub fn std_dev(&self) -> f64 {
        match *self {
            WeightSampler::Normal { std_dev } => std_dev,
            WeightSampler::Uniform { scale } => scale / 3f64.sqrt(),
        }
    }
}

/// LeCun normal initialization for a layer with `n_prev` inputs per unit.
pub fn lecun_normal_init(n_prev: usize) -> Result<WeightSampler> {
    if n_prev == 0 {
        return Err(Error::Parameter("LeCun init needs n_prev >= 1".into()));
    }
    Ok(WeightSampler::Normal {
        std_dev: (1.0 / n_prev as f64).sqrt(),
    })
}

pub fn uniform_init(scale: f64) -> Result<WeightSampler> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Parameter(format!(
            "uniform init scale must be > 0, got {scale}"
        )));
    }
    Ok(WeightSampler::Uniform { scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn lecun_sigma() {
        let s = lecun_normal_init(784).unwrap();
        assert!((s.std_dev() - 0.035_714_285_714_285_71).abs() < 1e-15);
        assert_eq!(lecun_normal_init(1).unwrap().std_dev(), 1.0);
        assert!(lecun_normal_init(0).is_err());
    }

    #[test]
    fn lecun_sample_moments() {
        let s = lecun_normal_init(100).unwrap();
        let xs = s.sample_n(&mut Rng::new(11), 100_000);
        let (mean, var) = moments(&xs);
        assert!(mean.abs() <= 3.0 * 0.1 / (1e5f64).sqrt(), "mean {mean}");
        assert!((var.sqrt() - 0.1).abs() <= 0.002, "sd {}", var.sqrt());
    }

    #[test]
    fn uniform_bounds_and_moments() {
        let s = uniform_init(0.1).unwrap();
        let xs = s.sample_n(&mut Rng::new(5), 100_000);
        assert!(xs.iter().all(|&x| x > -0.1 && x < 0.1));
        let (mean, var) = moments(&xs);
        assert!(mean.abs() <= 3.0 * (0.1 / 3f64.sqrt()) / (1e5f64).sqrt(), "mean {mean}");
        let expect = 0.01 / 3.0;
        assert!((var - expect).abs() <= 0.02 * expect, "var {var}");
        assert!(uniform_init(0.0).is_err());
        assert!(uniform_init(-1.0).is_err());
    }

    #[test]
    fn default_scheme_by_activation() {
        assert_eq!(
            InitScheme::for_activation(ActivationKind::SELU),
            InitScheme::LecunNormal
        );
        assert_eq!(
            InitScheme::for_activation(ActivationKind::GELU),
            InitScheme::UNIFORM_DEFAULT
        );
    }
}
