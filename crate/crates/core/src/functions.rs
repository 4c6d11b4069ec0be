//! Bounded test functions, cost data and drifts.
//!
//! Presets carry their sup-norm and Lipschitz constants so problem data can be
//! validated without user-supplied bounds.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Real-valued function on the truncated state space.
pub trait TestFunction: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `out`; returns `false` when no analytic
    /// derivative is available.
    fn grad(&self, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn has_grad(&self) -> bool {
        false
    }

    /// Zero-based coordinates the function depends on, if it is cylindrical.
    fn active_coords(&self) -> Option<Vec<usize>> {
        None
    }

    /// Declared `sup |phi|`.
    fn bound(&self) -> Option<f64> {
        None
    }

    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Closed-form test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionPreset {
    Zero,
    Constant {
        value: f64,
    },
    /// `scale * tanh(steepness * x_coord)`; a sign-like step for large steepness.
    Tanh {
        #[serde(default)]
        coord: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "one")]
        steepness: f64,
    },
    /// `cap * tanh(x_coord / cap)`: the identity near 0, bounded by `cap`.
    SmoothedLinear {
        #[serde(default)]
        coord: usize,
        cap: f64,
    },
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))` over the first
    /// `center.len()` coordinates.
    GaussianBump {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
    },
    /// `amplitude * exp(1 - 1 / (1 - (x_coord / radius)^2))` inside the radius,
    /// zero outside.
    CompactBump {
        #[serde(default)]
        coord: usize,
        amplitude: f64,
        radius: f64,
    },
    /// Mean over coordinates of a softplus-smoothed clamp of `x_i` to
    /// `[low, high]`, shifted by `-low`: values in `(0, high - low)`.
    SmoothedRamp {
        low: f64,
        high: f64,
        width: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[inline]
fn softplus(y: f64) -> f64 {
    if y > 0.0 {
        y + (-y).exp().ln_1p()
    } else {
        y.exp().ln_1p()
    }
}

#[inline]
fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

impl TestFunction for FunctionPreset {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { value } => *value,
            Self::Tanh { coord, scale, steepness } => scale * (steepness * x[*coord]).tanh(),
            Self::SmoothedLinear { coord, cap } => cap * (x[*coord] / cap).tanh(),
            Self::GaussianBump { amplitude, width, center } => {
                let r2: f64 = center.iter().zip(x).map(|(c, xi)| (xi - c).powi(2)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            Self::CompactBump { coord, amplitude, radius } => {
                let z = x[*coord] / radius;
                if z.abs() < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - z * z)).exp()
                } else {
                    0.0
                }
            }
            Self::SmoothedRamp { low, high, width } => {
                let s: f64 = x
                    .iter()
                    .map(|&xi| width * (softplus((xi - low) / width) - softplus((xi - high) / width)))
                    .sum();
                s / x.len() as f64
            }
        }
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) -> bool {
        out.iter_mut().for_each(|o| *o = 0.0);
        match self {
            Self::Zero | Self::Constant { .. } => {}
            Self::Tanh { coord, scale, steepness } => {
                let th = (steepness * x[*coord]).tanh();
                out[*coord] = scale * steepness * (1.0 - th * th);
            }
            Self::SmoothedLinear { coord, cap } => {
                let th = (x[*coord] / cap).tanh();
                out[*coord] = 1.0 - th * th;
            }
            Self::GaussianBump { .. } => {
                let v = self.eval(x);
                if let Self::GaussianBump { width, center, .. } = self {
                    for (i, c) in center.iter().enumerate() {
                        out[i] = -v * (x[i] - c) / (width * width);
                    }
                }
            }
            Self::CompactBump { coord, amplitude, radius } => {
                let z = x[*coord] / radius;
                if z.abs() < 1.0 {
                    let q = 1.0 - z * z;
                    let v = amplitude * (1.0 - 1.0 / q).exp();
                    out[*coord] = v * (-2.0 * z / (q * q)) / radius;
                }
            }
            Self::SmoothedRamp { low, high, width } => {
                let n = x.len() as f64;
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = (logistic((xi - low) / width) - logistic((xi - high) / width)) / n;
                }
            }
        }
        true
    }

    fn has_grad(&self) -> bool {
        true
    }

    fn active_coords(&self) -> Option<Vec<usize>> {
        match self {
            Self::Zero | Self::Constant { .. } => Some(vec![]),
            Self::Tanh { coord, .. } | Self::SmoothedLinear { coord, .. } | Self::CompactBump { coord, .. } => {
                Some(vec![*coord])
            }
            Self::GaussianBump { center, .. } => Some((0..center.len()).collect()),
            Self::SmoothedRamp { .. } => None,
        }
    }

    fn bound(&self) -> Option<f64> {
        Some(match self {
            Self::Zero => 0.0,
            Self::Constant { value } => value.abs(),
            Self::Tanh { scale, .. } => scale.abs(),
            Self::SmoothedLinear { cap, .. } => cap.abs(),
            Self::GaussianBump { amplitude, .. } | Self::CompactBump { amplitude, .. } => amplitude.abs(),
            Self::SmoothedRamp { low, high, .. } => (high - low).abs(),
        })
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(match self {
            Self::Zero | Self::Constant { .. } => 0.0,
            Self::Tanh { scale, steepness, .. } => (scale * steepness).abs(),
            Self::SmoothedLinear { .. } => 1.0,
            // max of |r| exp(-r^2 / 2 w^2) / w^2 at r = w
            Self::GaussianBump { amplitude, width, .. } => amplitude.abs() / width * (-0.5f64).exp(),
            // max |d/dz exp(1 - 1/(1-z^2))| < 1.6 (attained near |z| = 0.58)
            Self::CompactBump { amplitude, radius, .. } => 1.6 * amplitude.abs() / radius,
            Self::SmoothedRamp { .. } => 1.0,
        })
    }
}

/// Wraps closures as a test function, mostly for tests and custom data.
pub struct FnTestFunction {
    eval: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    grad: Option<Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>>,
    active: Option<Vec<usize>>,
    bound: Option<f64>,
}

impl FnTestFunction {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Box::new(eval),
            grad: None,
            active: None,
            bound: None,
        }
    }

    pub fn with_grad(mut self, grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.grad = Some(Box::new(grad));
        self
    }

    pub fn cylindrical(mut self, coords: Vec<usize>) -> Self {
        self.active = Some(coords);
        self
    }

    pub fn bounded(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }
}

impl fmt::Debug for FnTestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnTestFunction")
            .field("has_grad", &self.grad.is_some())
            .field("active", &self.active)
            .field("bound", &self.bound)
            .finish()
    }
}

impl TestFunction for FnTestFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    fn grad(&self, x: &[f64], out: &mut [f64]) -> bool {
        match &self.grad {
            Some(g) => {
                g(x, out);
                true
            }
            None => false,
        }
    }

    fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    fn active_coords(&self) -> Option<Vec<usize>> {
        self.active.clone()
    }

    fn bound(&self) -> Option<f64> {
        self.bound
    }
}

impl<T: TestFunction + ?Sized> TestFunction for Arc<T> {
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn grad(&self, x: &[f64], out: &mut [f64]) -> bool {
        (**self).grad(x, out)
    }
    fn has_grad(&self) -> bool {
        (**self).has_grad()
    }
    fn active_coords(&self) -> Option<Vec<usize>> {
        (**self).active_coords()
    }
    fn bound(&self) -> Option<f64> {
        (**self).bound()
    }
    fn lipschitz(&self) -> Option<f64> {
        (**self).lipschitz()
    }
}

/// Gradient by central differences with step `step`, used where no analytic
/// derivative exists.
pub fn fd_gradient(phi: &dyn TestFunction, x: &[f64], step: f64, out: &mut [f64]) {
    let mut y = x.to_vec();
    for i in 0..x.len() {
        y[i] = x[i] + step;
        let up = phi.eval(&y);
        y[i] = x[i] - step;
        let down = phi.eval(&y);
        y[i] = x[i];
        out[i] = (up - down) / (2.0 * step);
    }
}

/// Drift `F` of the state equation.
pub trait Drift: Send + Sync {
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn lipschitz(&self) -> f64;
    /// `sup |F|` in dimension `dim`.
    fn bound(&self, dim: usize) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftPreset {
    Zero,
    /// `scale * tanh(x_i)` in every coordinate.
    Tanh { scale: f64 },
    /// The same vector everywhere.
    Constant { value: Vec<f64> },
}

impl Drift for DriftPreset {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Self::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Self::Tanh { scale } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = scale * xi.tanh();
                }
            }
            Self::Constant { value } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = value.get(i).copied().unwrap_or(0.0);
                }
            }
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            Self::Zero | Self::Constant { .. } => 0.0,
            Self::Tanh { scale } => scale.abs(),
        }
    }

    fn bound(&self, dim: usize) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Tanh { scale } => scale.abs() * (dim as f64).sqrt(),
            Self::Constant { value } => value.iter().take(dim).map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}
