//! The seven activation functions, their analytic derivatives, and softmax.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// SELU scale constant.
pub const SELU_LAMBDA: f64 = 1.0507;
/// SELU negative-branch constant.
pub const SELU_ALPHA: f64 = 1.6732;

// GELU tanh approximation.
const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044715;
// Derivative coefficients: full-precision forms of the printed
// 0.0356774, 0.797885, 0.0535161 and 0.398942.
const GELU_D_INNER_CUBIC: f64 = GELU_SQRT_2_OVER_PI * GELU_CUBIC;
const GELU_D_INNER_LINEAR: f64 = GELU_SQRT_2_OVER_PI;
const GELU_D_OUTER_CUBIC: f64 = 1.5 * GELU_SQRT_2_OVER_PI * GELU_CUBIC;
const GELU_D_OUTER_LINEAR: f64 = 0.5 * GELU_SQRT_2_OVER_PI;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    #[default]
    Relu,
    Elu { alpha: f64 },
    Selu { lambda: f64, alpha: f64 },
    Gelu,
    Isrlu { alpha: f64 },
}

impl ActivationKind {
    pub const RELU: Self = ActivationKind::Relu;
    pub const ELU: Self = ActivationKind::Elu { alpha: 1.0 };
    pub const SELU: Self = ActivationKind::Selu {
        lambda: SELU_LAMBDA,
        alpha: SELU_ALPHA,
    };
    pub const GELU: Self = ActivationKind::Gelu;
    pub const ISRLU: Self = ActivationKind::Isrlu { alpha: 1.0 };
    pub const TANH: Self = ActivationKind::Tanh;
    pub const SIGMOID: Self = ActivationKind::Sigmoid;

    /// Every kind with default constants.
    pub const ALL: [ActivationKind; 7] = [
        Self::TANH,
        Self::SIGMOID,
        Self::RELU,
        Self::ELU,
        Self::SELU,
        Self::GELU,
        Self::ISRLU,
    ];

    /// The five rectifier-family kinds compared in the benchmarks.
    pub const BENCHMARKED: [ActivationKind; 5] =
        [Self::RELU, Self::ELU, Self::SELU, Self::GELU, Self::ISRLU];

    pub fn elu(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("ELU alpha must be > 0, got {alpha}")));
        }
        Ok(ActivationKind::Elu { alpha })
    }

    pub fn selu(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0 && alpha > 0.0 && lambda.is_finite() && alpha.is_finite()) {
            return Err(Error::Parameter(format!(
                "SELU constants must be positive, got lambda={lambda} alpha={alpha}"
            )));
        }
        Ok(ActivationKind::Selu { lambda, alpha })
    }

    pub fn isrlu(alpha: f64) -> Result<Self> {
        if !(1.0..=3.0).contains(&alpha) {
            return Err(Error::Parameter(format!(
                "ISRLU alpha must lie in [1, 3], got {alpha}"
            )));
        }
        Ok(ActivationKind::Isrlu { alpha })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Relu => "relu",
            ActivationKind::Elu { .. } => "elu",
            ActivationKind::Selu { .. } => "selu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Isrlu { .. } => "isrlu",
        }
    }

    pub fn is_selu(&self) -> bool {
        matches!(self, ActivationKind::Selu { .. })
    }

    /// Forward value without the finiteness check.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x.exp_m1()
                }
            }
            ActivationKind::Selu { lambda, alpha } => {
                if x > 0.0 {
                    lambda * x
                } else {
                    lambda * alpha * x.exp_m1()
                }
            }
            ActivationKind::Gelu => {
                let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
            ActivationKind::Isrlu { alpha } => {
                if x >= 0.0 {
                    x
                } else {
                    x / (1.0 + alpha * x * x).sqrt()
                }
            }
        }
    }

    /// `(f(x), f'(x))` in one pass, sharing the transcendental where the
    /// forms allow. Agrees with [`Self::apply`] and [`Self::derivative`] to
    /// rounding.
    #[inline]
    pub fn apply_with_derivative(&self, x: f64) -> (f64, f64) {
        match *self {
            ActivationKind::Tanh => {
                let t = x.tanh();
                (t, (1.0 - t) * (1.0 + t))
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                (s, s * (1.0 - s))
            }
            ActivationKind::Elu { alpha } if x <= 0.0 => {
                let e = x.exp_m1();
                (alpha * e, alpha * (e + 1.0))
            }
            ActivationKind::Selu { lambda, alpha } if x <= 0.0 => {
                let e = x.exp_m1();
                (lambda * alpha * e, lambda * alpha * (e + 1.0))
            }
            ActivationKind::Gelu => {
                let x3 = x * x * x;
                let u = GELU_D_INNER_CUBIC * x3 + GELU_D_INNER_LINEAR * x;
                let t = u.tanh();
                let outer = GELU_D_OUTER_CUBIC * x3 + GELU_D_OUTER_LINEAR * x;
                let tail = if u.abs() > 40.0 { 0.0 } else { outer * (1.0 - t) * (1.0 + t) };
                (0.5 * x * (1.0 + t), 0.5 * t + 0.5 + tail)
            }
            _ => (self.apply(x), self.derivative(x)),
        }
    }

    /// Derivative without the finiteness check.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha * x.exp()
                }
            }
            ActivationKind::Selu { lambda, alpha } => {
                if x > 0.0 {
                    lambda
                } else {
                    lambda * alpha * x.exp()
                }
            }
            ActivationKind::Gelu => {
                let x3 = x * x * x;
                let u = GELU_D_INNER_CUBIC * x3 + GELU_D_INNER_LINEAR * x;
                // cosh^-2(u) underflows to 0 long before the polynomial
                // factor can overflow; cut it off to avoid inf * 0.
                let sech2 = if u.abs() > 40.0 {
                    0.0
                } else {
                    let c = u.cosh();
                    1.0 / (c * c)
                };
                let outer = GELU_D_OUTER_CUBIC * x3 + GELU_D_OUTER_LINEAR * x;
                0.5 * u.tanh() + 0.5 + if sech2 == 0.0 { 0.0 } else { outer * sech2 }
            }
            ActivationKind::Isrlu { alpha } => {
                if x >= 0.0 {
                    1.0
                } else {
                    let r = 1.0 / (1.0 + alpha * x * x).sqrt();
                    r * r * r
                }
            }
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Self::TANH),
            "sigmoid" => Ok(Self::SIGMOID),
            "relu" => Ok(Self::RELU),
            "elu" => Ok(Self::ELU),
            "selu" => Ok(Self::SELU),
            "gelu" => Ok(Self::GELU),
            "isrlu" => Ok(Self::ISRLU),
            other => Err(Error::Parameter(format!("unknown activation '{other}'"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_finite(index: usize, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { index, value: x })
    }
}

pub fn act_forward(kind: ActivationKind, x: f64) -> Result<f64> {
    check_finite(0, x)?;
    Ok(kind.apply(x))
}

pub fn act_backward(kind: ActivationKind, x: f64) -> Result<f64> {
    check_finite(0, x)?;
    Ok(kind.derivative(x))
}

fn map_checked(t: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    if let Some((index, &value)) = t.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Domain { index, value });
    }
    Ok(t.map(f))
}

/// Elementwise forward pass.
pub fn act_map(kind: ActivationKind, t: &Tensor) -> Result<Tensor> {
    map_checked(t, |x| kind.apply(x))
}

/// Elementwise derivative.
pub fn act_map_grad(kind: ActivationKind, t: &Tensor) -> Result<Tensor> {
    map_checked(t, |x| kind.derivative(x))
}

/// Values and derivatives together, without the finiteness check.
pub fn act_map_with_grad(kind: ActivationKind, t: &Tensor) -> Result<(Tensor, Tensor)> {
    let (f, d): (Vec<f64>, Vec<f64>) = t.data().iter().map(|&x| kind.apply_with_derivative(x)).unzip();
    Ok((Tensor::new(t.shape(), f)?, Tensor::new(t.shape(), d)?))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Domain { index, value });
    }
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax over a `N×K` tensor of logits.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 {
        return Err(Error::Shape(format!(
            "softmax_rows expects N×K logits, got {:?}",
            logits.shape()
        )));
    }
    if let Some((index, &value)) = logits
        .data()
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite())
    {
        return Err(Error::Domain { index, value });
    }
    let mut out = logits.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_value_and_derivative_agree_with_separate_forms() {
        for k in ActivationKind::ALL {
            for i in -2000..=2000 {
                let x = i as f64 / 100.0;
                let (f, d) = k.apply_with_derivative(x);
                assert!((f - k.apply(x)).abs() <= 1e-12 * (1.0 + f.abs()), "{k} f({x})");
                assert!((d - k.derivative(x)).abs() <= 1e-12 * (1.0 + d.abs()), "{k} f'({x})");
            }
        }
    }

    #[test]
    fn gelu_derivative_coefficients_round_to_printed_values() {
        let round = |v: f64, digits: i32| (v * 10f64.powi(digits)).round() / 10f64.powi(digits);
        assert_eq!(round(GELU_D_INNER_CUBIC, 7), 0.0356774);
        assert_eq!(round(GELU_D_INNER_LINEAR, 6), 0.797885);
        assert_eq!(round(GELU_D_OUTER_CUBIC, 7), 0.0535161);
        assert_eq!(round(GELU_D_OUTER_LINEAR, 6), 0.398942);
    }

    #[test]
    fn forward_examples() {
        assert_eq!(act_forward(ActivationKind::RELU, -3.0).unwrap(), 0.0);
        assert!((act_forward(ActivationKind::SELU, 1.0).unwrap() - 1.0507).abs() < 1e-15);
        assert_eq!(act_forward(ActivationKind::GELU, 0.0).unwrap(), 0.0);
        // e^-1 - 1 and -1/sqrt(2)
        assert!((act_forward(ActivationKind::ELU, -1.0).unwrap() + 0.632_120_558_828_557_7).abs() < 1e-12);
        assert!((act_forward(ActivationKind::ISRLU, -1.0).unwrap() + 0.707_106_781_186_547_5).abs() < 1e-12);
    }

    #[test]
    fn backward_examples() {
        assert_eq!(act_backward(ActivationKind::RELU, 2.0).unwrap(), 1.0);
        assert_eq!(act_backward(ActivationKind::RELU, 0.0).unwrap(), 0.0);
        assert_eq!(act_backward(ActivationKind::GELU, 0.0).unwrap(), 0.5);
        // (1/sqrt 2)^3 and 1.0507 * 1.6732 * e^-1
        assert!((act_backward(ActivationKind::ISRLU, -1.0).unwrap() - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert!((act_backward(ActivationKind::SELU, -1.0).unwrap() - 0.646_743_550_133_137_8).abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_domain_error() {
        for kind in ActivationKind::ALL {
            assert!(matches!(act_forward(kind, f64::NAN), Err(Error::Domain { .. })));
            assert!(matches!(act_backward(kind, f64::INFINITY), Err(Error::Domain { .. })));
        }
        let t = Tensor::from_vec(vec![0.0, 1.0, f64::NAN]).unwrap();
        match act_map(ActivationKind::RELU, &t) {
            Err(Error::Domain { index, .. }) => assert_eq!(index, 2),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn tensor_maps() {
        let t = Tensor::from_vec(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(act_map(ActivationKind::RELU, &t).unwrap().data(), &[0.0, 0.0, 2.0]);
        let z = Tensor::zeros(&[3, 4]).unwrap();
        assert_eq!(act_map(ActivationKind::SELU, &z).unwrap(), z);
    }

    #[test]
    fn constructors_validate() {
        assert!(ActivationKind::isrlu(0.5).is_err());
        assert!(ActivationKind::isrlu(3.0).is_ok());
        assert!(ActivationKind::elu(0.0).is_err());
        assert!(ActivationKind::selu(1.0, -1.0).is_err());
        for kind in ActivationKind::ALL {
            assert_eq!(kind.name().parse::<ActivationKind>().unwrap(), kind);
        }
        assert!("swish".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn gelu_derivative_stays_finite_for_huge_inputs() {
        for x in [-1e200, -1e5, 1e5, 1e200] {
            let d = ActivationKind::GELU.derivative(x);
            assert!(d.is_finite(), "x={x} d={d}");
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        for c in [-1e3, 0.0, 7.5, 1e3] {
            let s = softmax(&[c; 4]).unwrap();
            assert!(s.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        }
        assert!(matches!(softmax(&[]), Err(Error::Shape(_))));
    }
}
