//! Ornstein–Uhlenbeck marginals, the Monte Carlo transition semigroup `P_t`,
//! derivative estimators and the generator on cylindrical functions.
//!
//! All Monte Carlo estimates here use common random numbers: every
//! evaluation point shares the same draws of the stochastic convolution.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::functions::{fd_gradient, TestFunction};
use crate::mc::{map_chunks, reduce_moment_vecs, reduce_moments, Estimate, Moments};
use crate::quad::{integrate, QuadSpec};
use crate::rng::RngStream;
use crate::spectrum::SpectralModel;
use crate::stable::{kernel_scale_unchecked, levy_constant, standard_draw};

/// Coordinates of the stochastic convolution `Z^0_{A,time}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionState {
    pub time: f64,
    pub coords: Vec<f64>,
}

impl ConvolutionState {
    pub fn zero(n_modes: usize) -> Self {
        Self {
            time: 0.0,
            coords: vec![0.0; n_modes],
        }
    }
}

/// Law of `Z^0_{A,t}` for a fixed `t`: independent coordinates with stable
/// scales `kernel_scale(gamma_n, beta_n, alpha, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuMarginal {
    pub t: f64,
    pub alpha: f64,
    pub factors: Vec<f64>,
    pub scales: Vec<f64>,
}

impl OuMarginal {
    pub fn new(model: &SpectralModel, t: f64) -> Result<Self> {
        check_nonnegative("t", t)?;
        Ok(Self {
            t,
            alpha: model.alpha,
            factors: model.semigroup_factor(t)?,
            scales: model
                .gammas
                .iter()
                .zip(&model.betas)
                .map(|(&g, &b)| kernel_scale_unchecked(g, b, model.alpha, t))
                .collect(),
        })
    }

    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, &s) in out.iter_mut().zip(&self.scales) {
            *o = s * standard_draw(self.alpha, rng);
        }
    }

    /// `e^{tA} x + xi`.
    #[inline]
    pub fn shift_into(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = self.factors[i] * x[i] + xi[i];
        }
    }
}

/// One exact draw of `Z^0_{A,t}`.
pub fn sample_marginal<R: Rng + ?Sized>(model: &SpectralModel, t: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_positive("t", t)?;
    let m = OuMarginal::new(model, t)?;
    let mut out = vec![0.0; model.n_modes()];
    m.sample_into(rng, &mut out);
    Ok(out)
}

/// Exact recursion `Z_{t+dt} = e^{dt A} Z_t + independent increment`.
pub fn advance_convolution<R: Rng + ?Sized>(
    state: &ConvolutionState,
    model: &SpectralModel,
    dt: f64,
    rng: &mut R,
) -> Result<ConvolutionState> {
    check_positive("dt", dt)?;
    if state.coords.len() != model.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: model.n_modes(),
            got: state.coords.len(),
        });
    }
    let step = OuMarginal::new(model, dt)?;
    let mut next = state.clone();
    advance_with(&step, &mut next, rng);
    Ok(next)
}

#[inline]
pub(crate) fn advance_with<R: Rng + ?Sized>(step: &OuMarginal, state: &mut ConvolutionState, rng: &mut R) {
    for ((c, &f), &s) in state.coords.iter_mut().zip(&step.factors).zip(&step.scales) {
        *c = f * *c + s * standard_draw(step.alpha, rng);
    }
    state.time += step.t;
}

fn check_point(model: &SpectralModel, x: &[f64]) -> Result<()> {
    if x.len() != model.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: model.n_modes(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Monte Carlo estimate of `P_t phi(x) = E phi(e^{tA} x + Z^0_{A,t})`.
///
/// `t = 0` returns `phi(x)` with zero error.
pub fn semigroup_apply(
    model: &SpectralModel,
    phi: &dyn TestFunction,
    t: f64,
    x: &[f64],
    n_mc: usize,
    rng: RngStream,
) -> Result<Estimate> {
    check_nonnegative("t", t)?;
    check_point(model, x)?;
    if t == 0.0 {
        let v = phi.eval(x);
        if !v.is_finite() {
            return Err(Error::PoisonedEstimate { index: 0 });
        }
        return Ok(Estimate { estimate: v, std_error: 0.0 });
    }
    let marg = OuMarginal::new(model, t)?;
    let n = model.n_modes();
    let parts = map_chunks(n_mc, rng, |g, range| {
        let mut xi = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut m = Moments::default();
        for i in range {
            marg.sample_into(g, &mut xi);
            marg.shift_into(x, &xi, &mut y);
            let v = phi.eval(&y);
            if !v.is_finite() {
                return Err(Error::PoisonedEstimate { index: i });
            }
            m.push(v);
        }
        Ok(m)
    })?;
    Ok(reduce_moments(&parts).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Mean of `e^{tA} grad phi(e^{tA} x + xi)`; needs an analytic gradient.
    Pathwise,
    /// Central differences of `P_t phi` with common random numbers.
    CentralFd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Delta-method standard error of the norm.
    pub fn norm_std_error(&self) -> f64 {
        let n = self.norm();
        if n == 0.0 {
            return self.std_errors.iter().map(|s| s * s).sum::<f64>().sqrt();
        }
        self.grad
            .iter()
            .zip(&self.std_errors)
            .map(|(g, s)| (g / n * s).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Default finite-difference step `1e-3 (1 + |x|)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-3 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Estimate of `D P_t phi(x)`.
pub fn semigroup_gradient(
    model: &SpectralModel,
    phi: &dyn TestFunction,
    t: f64,
    x: &[f64],
    n_mc: usize,
    rng: RngStream,
    method: GradientMethod,
    fd_step: Option<f64>,
) -> Result<GradientEstimate> {
    check_positive("t", t)?;
    check_point(model, x)?;
    if method == GradientMethod::Pathwise && !phi.has_grad() {
        return Err(Error::MissingDerivative);
    }
    let delta = fd_step.unwrap_or_else(|| default_fd_step(x));
    check_positive("fd_step", delta)?;
    let marg = OuMarginal::new(model, t)?;
    let n = model.n_modes();
    let parts = map_chunks(n_mc, rng, |g, range| {
        let mut xi = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut dphi = vec![0.0; n];
        let mut acc = vec![Moments::default(); n];
        for i in range {
            marg.sample_into(g, &mut xi);
            marg.shift_into(x, &xi, &mut y);
            match method {
                GradientMethod::Pathwise => {
                    phi.grad(&y, &mut dphi);
                    for k in 0..n {
                        let v = marg.factors[k] * dphi[k];
                        if !v.is_finite() {
                            return Err(Error::PoisonedEstimate { index: i });
                        }
                        acc[k].push(v);
                    }
                }
                GradientMethod::CentralFd => {
                    for k in 0..n {
                        let shift = delta * marg.factors[k];
                        let v = if shift == 0.0 {
                            0.0
                        } else {
                            let yk = y[k];
                            y[k] = yk + shift;
                            let up = phi.eval(&y);
                            y[k] = yk - shift;
                            let down = phi.eval(&y);
                            y[k] = yk;
                            (up - down) / (2.0 * delta)
                        };
                        if !v.is_finite() {
                            return Err(Error::PoisonedEstimate { index: i });
                        }
                        acc[k].push(v);
                    }
                }
            }
        }
        Ok(acc)
    })?;
    let acc = reduce_moment_vecs(&parts, n);
    Ok(GradientEstimate {
        grad: acc.iter().map(|m| m.mean).collect(),
        std_errors: acc.iter().map(|m| m.std_error()).collect(),
    })
}

/// Central difference of `P_t phi` at `x` along `dir` with common random numbers.
pub fn directional_derivative(
    model: &SpectralModel,
    phi: &dyn TestFunction,
    t: f64,
    x: &[f64],
    dir: &[f64],
    n_mc: usize,
    rng: RngStream,
    fd_step: f64,
) -> Result<Estimate> {
    check_positive("t", t)?;
    check_point(model, x)?;
    check_point(model, dir)?;
    let marg = OuMarginal::new(model, t)?;
    let n = model.n_modes();
    let shift: Vec<f64> = dir.iter().zip(&marg.factors).map(|(d, f)| fd_step * d * f).collect();
    let parts = map_chunks(n_mc, rng, |g, range| {
        let mut xi = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut up = vec![0.0; n];
        let mut m = Moments::default();
        for i in range {
            marg.sample_into(g, &mut xi);
            marg.shift_into(x, &xi, &mut y);
            for k in 0..n {
                up[k] = y[k] + shift[k];
                y[k] -= shift[k];
            }
            let v = (phi.eval(&up) - phi.eval(&y)) / (2.0 * fd_step);
            if !v.is_finite() {
                return Err(Error::PoisonedEstimate { index: i });
            }
            m.push(v);
        }
        Ok(m)
    })?;
    Ok(reduce_moments(&parts).into())
}

/// Geometric grid of `n` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo * (r * i as f64).exp() }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub t: f64,
    pub sup_grad: f64,
    pub std_err: f64,
    /// Whether the point cleared the noise floor `3 * std_err` and entered the fit.
    pub fitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `log sup_grad` against `log t`.
    pub slope: f64,
    pub intercept: f64,
}

impl DecayFit {
    /// Rows as `t,sup_grad,std_err,fitted`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,sup_grad,std_err,fitted")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.t, r.sup_grad, r.std_err, r.fitted)?;
        }
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        format!("fitted_slope={} intercept={}", self.slope, self.intercept)
    }
}

/// Least-squares line through `(x_i, y_i)`; returns `(slope, intercept)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits the blow-up exponent of `G(t) = max_probes |D P_t phi|` (central
/// differences) against `t`.
pub fn gradient_decay_check(
    model: &SpectralModel,
    phi: &dyn TestFunction,
    t_grid: &[f64],
    probe_points: &[Vec<f64>],
    n_mc: usize,
    rng: RngStream,
) -> Result<DecayFit> {
    if t_grid.len() < 4 {
        return Err(Error::Inconclusive(format!(
            "time grid has {} points, at least 4 are needed",
            t_grid.len()
        )));
    }
    let (lo, hi) = t_grid
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    if !(lo > 0.0 && hi <= 1.0) {
        return Err(Error::ParameterOutOfRange {
            name: "t_grid",
            value: lo,
            bound: "times must lie in (0, 1]".into(),
        });
    }
    if hi / lo < 100.0 {
        return Err(Error::Inconclusive("time grid spans fewer than two decades".into()));
    }
    if probe_points.is_empty() {
        return Err(Error::Inconclusive("no probe points".into()));
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    for (i, &t) in t_grid.iter().enumerate() {
        let mut best = (0.0, 0.0);
        for x in probe_points {
            let g = semigroup_gradient(
                model,
                phi,
                t,
                x,
                n_mc,
                rng.substream(i as u64),
                GradientMethod::CentralFd,
                None,
            )?;
            let norm = g.norm();
            if norm > best.0 {
                best = (norm, g.norm_std_error());
            }
        }
        rows.push(DecayRow {
            t,
            sup_grad: best.0,
            std_err: best.1,
            fitted: best.0 > 3.0 * best.1 && best.0 > 0.0,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.fitted)
        .map(|r| (r.t.ln(), r.sup_grad.ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::Inconclusive(
            "fewer than two gradient estimates above the Monte Carlo noise floor".into(),
        ));
    }
    let (slope, intercept) = fit_line(&xs, &ys);
    Ok(DecayFit { rows, slope, intercept })
}

/// Nested estimator of `D^2_{k p} P_t phi(x)`, through
/// `<D P_{t/2} <D P_{t/2} phi, e^{tA/2} p>(x), k>`.
///
/// Inner and outer central differences each share their own common random
/// numbers (`rng.substream(1)` inside, `rng.substream(0)` outside), so the inner
/// map is a deterministic smooth function of its argument. The reported
/// standard error covers the outer sampling only.
pub fn second_derivative_estimate(
    model: &SpectralModel,
    phi: &dyn TestFunction,
    t: f64,
    x: &[f64],
    p: &[f64],
    k: &[f64],
    n_mc: usize,
    rng: RngStream,
) -> Result<Estimate> {
    check_positive("t", t)?;
    check_point(model, x)?;
    check_point(model, p)?;
    check_point(model, k)?;
    let n = model.n_modes();
    let half = OuMarginal::new(model, 0.5 * t)?;
    let delta = default_fd_step(x);

    let mut inner_draws = vec![0.0; n * n_mc];
    {
        let mut g = rng.substream(1).generator();
        for chunk in inner_draws.chunks_mut(n) {
            half.sample_into(&mut g, chunk);
        }
    }
    // q = e^{tA/2} p, then shifted once more by e^{tA/2} inside P_{t/2}
    let inner_shift: Vec<f64> = (0..n).map(|i| delta * half.factors[i] * half.factors[i] * p[i]).collect();
    let inner = |y: &[f64], buf_up: &mut [f64], buf_dn: &mut [f64]| -> f64 {
        let mut acc = 0.0;
        for xi in inner_draws.chunks(n) {
            for i in 0..n {
                let base = half.factors[i] * y[i] + xi[i];
                buf_up[i] = base + inner_shift[i];
                buf_dn[i] = base - inner_shift[i];
            }
            acc += phi.eval(buf_up) - phi.eval(buf_dn);
        }
        acc / (2.0 * delta * n_mc as f64)
    };

    let outer_shift: Vec<f64> = (0..n).map(|i| delta * half.factors[i] * k[i]).collect();
    let parts = map_chunks(n_mc, rng.substream(0), |g, range| {
        let mut eta = vec![0.0; n];
        let mut y_up = vec![0.0; n];
        let mut y_dn = vec![0.0; n];
        let mut b1 = vec![0.0; n];
        let mut b2 = vec![0.0; n];
        let mut m = Moments::default();
        for i in range {
            half.sample_into(g, &mut eta);
            for j in 0..n {
                let base = half.factors[j] * x[j] + eta[j];
                y_up[j] = base + outer_shift[j];
                y_dn[j] = base - outer_shift[j];
            }
            let v = (inner(&y_up, &mut b1, &mut b2) - inner(&y_dn, &mut b1, &mut b2)) / (2.0 * delta);
            if !v.is_finite() {
                return Err(Error::PoisonedEstimate { index: i });
            }
            m.push(v);
        }
        Ok(m)
    })?;
    Ok(reduce_moments(&parts).into())
}

/// Cut-off beyond which the large-jump integral is dropped, chosen so that
/// `2 ||phi||_0 c_alpha int_{xi_max}^inf xi^(-1-alpha) d xi < 1e-8`.
pub fn jump_cutoff(alpha: f64, c_alpha: f64, sup_norm: f64) -> f64 {
    if sup_norm == 0.0 {
        return 1.0;
    }
    let xi = (2.0 * sup_norm * c_alpha / (alpha * 1e-8)).powf(1.0 / alpha) * 1.01;
    xi.max(1.0)
}

/// `L^OU phi(x)`: the drift term `<Ax, D phi(x)>` plus, for each mode
/// `j <= j_max`, `c_alpha beta_j^alpha` times the compensated jump integral
/// along `e_j`.
///
/// Each one-dimensional integral is folded onto `xi > 0` and split at 1. On
/// `(0, 1]` the second-order Taylor term is subtracted and added back in
/// closed form; on `[1, xi_max]` the integrand is integrated in `log xi`.
pub fn generator_apply(
    model: &SpectralModel,
    phi: &dyn TestFunction,
    x: &[f64],
    j_max: usize,
    quad: &QuadSpec,
) -> Result<f64> {
    check_point(model, x)?;
    let n = model.n_modes();
    if j_max == 0 || j_max > n {
        return Err(Error::ParameterOutOfRange {
            name: "j_max",
            value: j_max as f64,
            bound: format!("must lie in 1..={n}"),
        });
    }
    let active = phi.active_coords().ok_or(Error::NotCylindrical { j_max })?;
    if active.iter().any(|&c| c >= j_max) {
        return Err(Error::NotCylindrical { j_max });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("evaluation point must be finite".into()));
    }
    let alpha = model.alpha;
    let c_alpha = levy_constant(alpha)?;
    let sup = phi
        .bound()
        .ok_or_else(|| Error::Domain("generator needs a declared bound on phi".into()))?;

    let mut grad = vec![0.0; n];
    if !phi.grad(x, &mut grad) {
        fd_gradient(phi, x, 1e-2 * default_fd_step(x), &mut grad);
    }
    let drift: f64 = (0..n).map(|i| -model.gammas[i] * x[i] * grad[i]).sum();

    let f0 = phi.eval(x);
    let xi_max = jump_cutoff(alpha, c_alpha, sup);
    let mut jumps = 0.0;
    for &j in &active {
        let beta = model.betas[j];
        if beta == 0.0 {
            continue;
        }
        let along = |s: f64| {
            let mut y = x.to_vec();
            y[j] += s;
            phi.eval(&y)
        };
        let h2 = 1e-4 * (1.0 + x[j].abs());
        let second = (along(h2) - 2.0 * f0 + along(-h2)) / (h2 * h2);
        let small = integrate(
            |s| {
                if s < 1e-4 {
                    return 0.0;
                }
                (along(s) + along(-s) - 2.0 * f0 - second * s * s) * s.powf(-1.0 - alpha)
            },
            0.0,
            1.0,
            quad,
        )?
        .value
            + second / (2.0 - alpha);
        let large = integrate(
            |u: f64| {
                let s = u.exp();
                (along(s) + along(-s) - 2.0 * f0) * (-alpha * u).exp()
            },
            0.0,
            xi_max.ln(),
            quad,
        )?
        .value
            - 2.0 * f0 * xi_max.powf(-alpha) / alpha;
        jumps += beta.powf(alpha) * (small + large);
    }
    Ok(drift + c_alpha * jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::FunctionPreset;
    use crate::spectrum::{make_heat_dirichlet_model, BetaSchedule};

    fn model(n: usize) -> SpectralModel {
        make_heat_dirichlet_model(n, 1.5, 0.7, BetaSchedule::Critical).unwrap()
    }

    #[test]
    fn constants_are_invariant() {
        let one = FunctionPreset::Constant { value: 1.0 };
        let e = semigroup_apply(&model(2), &one, 0.3, &[0.1, 0.2], 5000, RngStream::from_seed(1)).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.std_error, 0.0);
        for method in [GradientMethod::Pathwise, GradientMethod::CentralFd] {
            let g = semigroup_gradient(&model(2), &one, 0.3, &[0.1, 0.2], 5000, RngStream::from_seed(1), method, None).unwrap();
            assert_eq!(g.grad, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn time_zero_is_identity() {
        let phi = FunctionPreset::Tanh { coord: 0, scale: 1.0, steepness: 2.0 };
        let e = semigroup_apply(&model(1), &phi, 0.0, &[0.4], 10, RngStream::from_seed(1)).unwrap();
        assert_eq!(e.estimate, (0.8f64).tanh());
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn poisoned_integrand_names_sample() {
        let bad = crate::functions::FnTestFunction::new(|x| if x[0] > 0.0 { f64::NAN } else { 0.0 });
        let err = semigroup_apply(&model(1), &bad, 0.5, &[0.0], 1000, RngStream::from_seed(2)).unwrap_err();
        assert!(matches!(err, Error::PoisonedEstimate { .. }));
    }

    #[test]
    fn pathwise_needs_gradient() {
        let f = crate::functions::FnTestFunction::new(|x| x[0].tanh());
        let err = semigroup_gradient(&model(1), &f, 0.5, &[0.0], 100, RngStream::from_seed(2), GradientMethod::Pathwise, None)
            .unwrap_err();
        assert!(matches!(err, Error::MissingDerivative));
    }

    #[test]
    fn decay_check_needs_four_points() {
        let phi = FunctionPreset::Tanh { coord: 0, scale: 1.0, steepness: 20.0 };
        let err = gradient_decay_check(&model(1), &phi, &[1e-3, 1.0], &[vec![0.0]], 1000, RngStream::from_seed(1)).unwrap_err();
        assert!(matches!(err, Error::Inconclusive(_)));
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(1e-3, 1.0, 8);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[7], 1.0);
        assert!(g.windows(2).all(|w| (w[1] / w[0] - 10f64.powf(3.0 / 7.0)).abs() < 1e-12));
    }

    #[test]
    fn generator_of_constant_vanishes() {
        let one = FunctionPreset::Constant { value: 1.0 };
        let v = generator_apply(&model(1), &one, &[0.3], 1, &QuadSpec::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn generator_rejects_non_cylindrical() {
        let ramp = FunctionPreset::SmoothedRamp { low: 0.0, high: 1.0, width: 0.1 };
        assert!(matches!(
            generator_apply(&model(1), &ramp, &[0.0], 1, &QuadSpec::default()),
            Err(Error::NotCylindrical { .. })
        ));
        let second = FunctionPreset::Tanh { coord: 1, scale: 1.0, steepness: 1.0 };
        assert!(generator_apply(&model(2), &second, &[0.0, 0.0], 1, &QuadSpec::default()).is_err());
    }

    #[test]
    fn advance_with_huge_eigenvalue_forgets_state() {
        let m = SpectralModel::custom(vec![1e8], vec![1.0], 1.5, 0.7, 1.0).unwrap();
        let s = ConvolutionState { time: 0.0, coords: vec![5.0] };
        let step = OuMarginal::new(&m, 1.0).unwrap();
        assert_eq!(step.factors[0], 0.0);
        assert!((step.scales[0] - (1.5e8f64).powf(-1.0 / 1.5)).abs() < 1e-18);
        let mut g1 = RngStream::from_seed(5).generator();
        let mut g2 = RngStream::from_seed(5).generator();
        let a = advance_convolution(&s, &m, 1.0, &mut g1).unwrap();
        let b = advance_convolution(&ConvolutionState::zero(1), &m, 1.0, &mut g2).unwrap();
        assert_eq!(a.coords, b.coords);
        assert_eq!(a.time, 1.0);
    }
}
