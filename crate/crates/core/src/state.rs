//! Controlled mild state equation, solved path by path.
//!
//! With `Zc(s) = Z^0_{A,s} - e^{(s-t0)A} Z^0_{A,t0}` (the noise convolution
//! started at `t0`) the shifted process `Y = X - Zc` solves a random
//! integral equation without stochastic integrals. On the time grid it is
//! discretised by the exponential integrator
//!
//! `Y(s_{k+1}) = e^{dt A} Y(s_k) + W_dt (F(Y(s_k) + Zc(s_k)) + a_k)`,
//! `W_dt = (1 - e^{-gamma_n dt}) / gamma_n` per mode,
//!
//! and the whole grid is updated by Picard sweeps with the noise frozen.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::functions::{Drift, TestFunction};
use crate::ou::{advance_with, ConvolutionState, OuMarginal};
use crate::policy::Policy;
use crate::rng::RngStream;
use crate::spectrum::SpectralModel;

/// Data of the control problem: drift, costs, control radius and horizon.
#[derive(Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub drift: Arc<dyn Drift>,
    pub running_cost: Arc<dyn TestFunction>,
    pub terminal_cost: Arc<dyn TestFunction>,
    pub radius: f64,
    pub horizon: f64,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.dim)
            .field("drift_lipschitz", &self.drift.lipschitz())
            .field("drift_bound", &self.drift_bound())
            .field("radius", &self.radius)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl ProblemSpec {
    /// Validates the data; the drift's declared Lipschitz constant and bound
    /// are spot-checked at random points of `[-10, 10]^dim`.
    pub fn new(
        dim: usize,
        drift: Arc<dyn Drift>,
        running_cost: Arc<dyn TestFunction>,
        terminal_cost: Arc<dyn TestFunction>,
        radius: f64,
        horizon: f64,
    ) -> Result<Self> {
        check_positive("radius", radius)?;
        check_positive("horizon", horizon)?;
        if dim == 0 {
            return Err(Error::ParameterOutOfRange {
                name: "dim",
                value: 0.0,
                bound: "must be >= 1".into(),
            });
        }
        for (name, f) in [("running_cost", &running_cost), ("terminal_cost", &terminal_cost)] {
            if f.bound().is_none() {
                return Err(Error::Domain(format!("{name} must declare a sup-norm bound")));
            }
        }
        let spec = Self {
            dim,
            drift,
            running_cost,
            terminal_cost,
            radius,
            horizon,
        };
        spec.spot_check_drift()?;
        Ok(spec)
    }

    fn spot_check_drift(&self) -> Result<()> {
        let mut g = RngStream::new(0x5eed, 0xd71f7).generator();
        let d = self.dim;
        let (lip, bound) = (self.drift.lipschitz(), self.drift_bound());
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        let (mut fx, mut fy) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..256 {
            x.iter_mut().for_each(|v| *v = g.random_range(-10.0..10.0));
            y.iter_mut().for_each(|v| *v = g.random_range(-10.0..10.0));
            self.drift.apply(&x, &mut fx);
            self.drift.apply(&y, &mut fy);
            let dx = norm_diff(&x, &y);
            let df = norm_diff(&fx, &fy);
            if df > lip * dx * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::ParameterOutOfRange {
                    name: "drift_lipschitz",
                    value: lip,
                    bound: format!("observed difference quotient {}", df / dx),
                });
            }
            if norm(&fx) > bound * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::ParameterOutOfRange {
                    name: "drift_bound",
                    value: bound,
                    bound: format!("observed |F(x)| = {}", norm(&fx)),
                });
            }
        }
        Ok(())
    }

    pub fn drift_bound(&self) -> f64 {
        self.drift.bound(self.dim)
    }

    /// `L = R + ||F||_0`, the Lipschitz constant of the Hamiltonian in `p`.
    pub fn hamiltonian_lipschitz(&self) -> f64 {
        self.radius + self.drift_bound()
    }
}

fn ensure_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain("state path became non-finite".into()))
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Frozen noise on a uniform grid: per-cell increments of the convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub t0: f64,
    pub dt: f64,
    /// `increments[k]`: the fresh draw added over `[s_k, s_{k+1}]`.
    pub increments: Vec<Vec<f64>>,
}

impl NoisePath {
    pub fn generate(model: &SpectralModel, t0: f64, dt: f64, cells: usize, rng: RngStream) -> Result<Self> {
        check_positive("dt", dt)?;
        let step = OuMarginal::new(model, dt)?;
        let mut g = rng.generator();
        let mut increments = Vec::with_capacity(cells);
        for _ in 0..cells {
            let mut inc = vec![0.0; model.n_modes()];
            step.sample_into(&mut g, &mut inc);
            increments.push(inc);
        }
        Ok(Self { t0, dt, increments })
    }

    /// Convolution `Zc(s_k)` at every grid point, starting from 0.
    pub fn convolution(&self, model: &SpectralModel) -> Vec<Vec<f64>> {
        let factors = model.semigroup_factor(self.dt).expect("dt validated");
        let mut z = vec![0.0; model.n_modes()];
        let mut out = vec![z.clone()];
        for inc in &self.increments {
            for i in 0..z.len() {
                z[i] = factors[i] * z[i] + inc[i];
            }
            out.push(z.clone());
        }
        out
    }

    /// Noise of the same path restricted to cells `from..`.
    pub fn tail(&self, from: usize) -> Self {
        Self {
            t0: self.t0 + from as f64 * self.dt,
            dt: self.dt,
            increments: self.increments[from..].to_vec(),
        }
    }

    /// The path as a sequence of convolution states (equal in law to
    /// repeated [`crate::ou::advance_convolution`]).
    pub fn states(&self, model: &SpectralModel) -> Vec<ConvolutionState> {
        self.convolution(model)
            .into_iter()
            .enumerate()
            .map(|(k, coords)| ConvolutionState {
                time: self.t0 + k as f64 * self.dt,
                coords,
            })
            .collect()
    }
}

/// Same recursion as [`NoisePath::generate`] through the public one-step API.
pub fn simulate_convolution<R: Rng + ?Sized>(
    model: &SpectralModel,
    dt: f64,
    cells: usize,
    rng: &mut R,
) -> Result<Vec<ConvolutionState>> {
    let step = OuMarginal::new(model, dt)?;
    let mut state = ConvolutionState::zero(model.n_modes());
    let mut out = vec![state.clone()];
    for _ in 0..cells {
        advance_with(&step, &mut state, rng);
        out.push(state.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardSpec {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for PicardSpec {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `control_values[k]` is applied on `[s_k, s_{k+1})`; the last entry is
    /// the policy evaluated at the horizon, for reporting only.
    pub control_values: Vec<Vec<f64>>,
    /// Sup-norm Picard residuals, one list per block.
    pub residuals: Vec<Vec<f64>>,
    pub block_cells: usize,
}

impl StatePath {
    pub fn sweeps(&self) -> usize {
        self.residuals.iter().map(Vec::len).sum()
    }

    /// Largest ratio of consecutive residuals within a block, ignoring
    /// residuals that already sit at rounding level.
    pub fn contraction_factor(&self) -> f64 {
        self.residuals
            .iter()
            .flat_map(|r| r.windows(2).filter(|w| w[0] > 1e-14).map(|w| w[1] / w[0]))
            .fold(0.0, f64::max)
    }

    /// CSV with columns `s, X_1..X_N, a_1..a_N`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["s".to_string()];
        header.extend((1..=n).map(|i| format!("X_{i}")));
        header.extend((1..=n).map(|i| format!("a_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for ((s, x), a) in self.times.iter().zip(&self.states).zip(&self.control_values) {
            let mut row = vec![format!("{s}")];
            row.extend(x.iter().map(|v| format!("{v}")));
            row.extend(a.iter().map(|v| format!("{v}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Number of cells of a uniform grid of `[t0, T]` with the given step.
pub fn cell_count(t0: f64, horizon: f64, step: f64) -> Result<usize> {
    check_positive("step", step)?;
    let span = horizon - t0;
    if !(span > 0.0) || t0 < 0.0 {
        return Err(Error::ParameterOutOfRange {
            name: "t0",
            value: t0,
            bound: format!("must lie in [0, {horizon})"),
        });
    }
    let cells = (span / step).round().max(1.0);
    if ((cells * step) - span).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::ParameterOutOfRange {
            name: "step",
            value: step,
            bound: format!("must divide T - t0 = {span}"),
        });
    }
    Ok(cells as usize)
}

/// Solves the state equation on `[t0, T]` for one noise path drawn from
/// `noise_rng`.
#[allow(clippy::too_many_arguments)]
pub fn solve_state_path(
    model: &SpectralModel,
    problem: &ProblemSpec,
    policy: &dyn Policy,
    t0: f64,
    x: &[f64],
    step: f64,
    noise_rng: RngStream,
    picard: PicardSpec,
) -> Result<StatePath> {
    let cells = cell_count(t0, problem.horizon, step)?;
    let dt = (problem.horizon - t0) / cells as f64;
    let noise = NoisePath::generate(model, t0, dt, cells, noise_rng)?;
    solve_with_noise(model, problem, policy, x, &noise, picard)
}

/// Picard solver for a given frozen noise path starting at `noise.t0`.
pub fn solve_with_noise(
    model: &SpectralModel,
    problem: &ProblemSpec,
    policy: &dyn Policy,
    x: &[f64],
    noise: &NoisePath,
    picard: PicardSpec,
) -> Result<StatePath> {
    let n = model.n_modes();
    if x.len() != n || problem.dim != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if x.len() != n { x.len() } else { problem.dim },
        });
    }
    check_positive("picard_tol", picard.tol)?;
    let cells = noise.increments.len();
    let dt = noise.dt;
    let t0 = noise.t0;
    let times: Vec<f64> = (0..=cells).map(|k| t0 + k as f64 * dt).collect();
    let conv = noise.convolution(model);
    let factors = model.semigroup_factor(dt)?;
    let weights: Vec<f64> = model
        .gammas
        .iter()
        .map(|&g| if g * dt < 1e-12 { dt } else { -(-g * dt).exp_m1() / g })
        .collect();

    let lip = problem.drift.lipschitz();
    let block_cells = if lip * (problem.horizon - t0) < 0.5 {
        cells
    } else {
        (((0.49 / lip) / dt).floor() as usize).max(1)
    };

    let mut y: Vec<Vec<f64>> = vec![vec![0.0; n]; cells + 1];
    let mut y_new = y.clone();
    let mut controls: Vec<Vec<f64>> = vec![vec![0.0; n]; cells + 1];
    let mut residuals = Vec::new();
    y[0].copy_from_slice(x);

    let mut xs = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut start = 0;
    while start < cells {
        let end = (start + block_cells).min(cells);
        // initial guess: free linear evolution from the block's start
        for k in start..end {
            for i in 0..n {
                y[k + 1][i] = factors[i] * y[k][i];
            }
        }
        for k in start..end {
            y_new[k + 1].copy_from_slice(&y[k + 1]);
        }
        let mut block_res = Vec::new();
        loop {
            if block_res.len() >= picard.max_sweeps {
                return Err(Error::NonContraction {
                    sweeps: block_res.len(),
                    last_residual: *block_res.last().unwrap_or(&f64::NAN),
                    lip_times_horizon: lip * (problem.horizon - t0),
                });
            }
            // Gamma(Y^m): forcing from the previous iterate, exact e^{tA} transport
            let mut next = y[start].clone();
            let mut residual: f64 = 0.0;
            for k in start..end {
                for i in 0..n {
                    xs[i] = y[k][i] + conv[k][i];
                }
                problem.drift.apply(&xs, &mut f);
                policy.control(times[k], &xs, &mut a)?;
                let an = norm(&a);
                if an > problem.radius * (1.0 + 1e-12) {
                    return Err(Error::Inadmissible { norm: an, radius: problem.radius });
                }
                controls[k].copy_from_slice(&a);
                for i in 0..n {
                    next[i] = factors[i] * next[i] + weights[i] * (f[i] + a[i]);
                }
                residual = residual.max(norm_diff(&next, &y[k + 1]));
                y_new[k + 1].copy_from_slice(&next);
            }
            for k in start..end {
                ensure_finite(&y_new[k + 1])?;
                y[k + 1].copy_from_slice(&y_new[k + 1]);
            }
            block_res.push(residual);
            if residual < picard.tol {
                break;
            }
        }
        residuals.push(block_res);
        start = end;
    }

    let states: Vec<Vec<f64>> = y
        .iter()
        .zip(&conv)
        .map(|(yk, zk)| yk.iter().zip(zk).map(|(a, b)| a + b).collect())
        .collect();
    policy.control(times[cells], &states[cells], &mut a)?;
    controls[cells].copy_from_slice(&a);
    for s in &states {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("state path became non-finite".into()));
        }
    }
    Ok(StatePath {
        times,
        states,
        control_values: controls,
        residuals,
        block_cells,
    })
}
