//! Mild HJB equation on a tensor grid.
//!
//! The unknown `u(t, x)` (with `u(T - t, x) = V(t, x)`) solves
//!
//! `u(t, x) = P_t h(x) + int_0^t P_{t-s}[H(., Du(s, .))](x) ds`,
//!
//! with `H(x, p) = inf_{|l| <= R} (<l, p> + |l|^2 / 2) + <F(x), p> + g(x)`.
//! The right-hand side is a map on grid functions; with its Monte Carlo
//! draws frozen it is iterated to a fixed point.

pub mod grid;
mod io;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::mc::Moments;
use crate::ou::OuMarginal;
use crate::rng::RngStream;
use crate::spectrum::SpectralModel;
use crate::state::{norm, ProblemSpec};

pub use grid::TensorGrid;

/// `inf_{|l| <= R} <l, p> + |l|^2 / 2`.
pub fn hamiltonian_inf(p: &[f64], radius: f64) -> f64 {
    let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= radius {
        -0.5 * n * n
    } else {
        -radius * n + 0.5 * radius * radius
    }
}

/// Minimiser of `<l, p> + |l|^2 / 2` over the ball of radius `R`.
pub fn argmin_control(p: &[f64], radius: f64) -> Vec<f64> {
    let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if n <= radius { -1.0 } else { -radius / n };
    p.iter().map(|v| scale * v).collect()
}

/// `hamiltonian_inf(p, R) + <F(x), p> + g(x)`.
pub fn hamiltonian_full(x: &[f64], p: &[f64], problem: &ProblemSpec) -> f64 {
    let mut f = vec![0.0; x.len()];
    hamiltonian_with(x, p, problem, &mut f)
}

#[inline]
fn hamiltonian_with(x: &[f64], p: &[f64], problem: &ProblemSpec, f: &mut [f64]) -> f64 {
    problem.drift.apply(x, f);
    let fp: f64 = f.iter().zip(p).map(|(a, b)| a * b).sum();
    hamiltonian_inf(p, problem.radius) + fp + problem.running_cost.eval(x)
}

/// Box, spatial resolution and number of uniform time levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_width: f64,
    pub nodes_per_axis: usize,
    pub time_levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub n_mc: usize,
    pub seed: u64,
}

/// Time quadrature of `int_0^t_k ... ds` on the level grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeRule {
    /// First cell integrates `s^-gamma` exactly against the linear
    /// interpolant of `s^gamma f(s)` (zero at `s = 0`); trapezoid elsewhere.
    #[default]
    SingularFirstCell,
    /// Plain trapezoid, using the gradient of `h` at level 0.
    Trapezoid,
}

impl TimeRule {
    /// Weights `w[j]`, `j = 0..=k`, for the integral up to level `k` on a
    /// uniform grid with step `dt`.
    pub fn weights(&self, k: usize, dt: f64, gamma_smooth: f64) -> Vec<f64> {
        let mut w = vec![0.0; k + 1];
        if k == 0 {
            return w;
        }
        match self {
            Self::Trapezoid => {
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj = if j == 0 || j == k { 0.5 * dt } else { dt };
                }
            }
            Self::SingularFirstCell => {
                w[1] = dt / (2.0 - gamma_smooth);
                if k >= 2 {
                    w[1] += 0.5 * dt;
                    for wj in &mut w[2..k] {
                        *wj = dt;
                    }
                    w[k] = 0.5 * dt;
                }
            }
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbOptions {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(default)]
    pub time_rule: TimeRule,
    /// Redraw all samples every sweep; for estimating Monte Carlo bias only,
    /// the iteration then does not settle below the noise level.
    #[serde(default)]
    pub fresh_noise: bool,
}

impl Default for HjbOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 25,
            time_rule: TimeRule::default(),
            fresh_noise: false,
        }
    }
}

/// `u` and `Du` on nodes at every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridValueFunction {
    pub grid: TensorGrid,
    pub times: Vec<f64>,
    /// `values[k][node]`.
    pub values: Vec<Vec<f64>>,
    /// `gradients[k][node * dim + i]`; level 0 holds the grid gradient of `h`.
    pub gradients: Vec<Vec<f64>>,
}

impl GridValueFunction {
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("at least one level")
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn nearest_level(&self, t: f64) -> usize {
        let m = self.times.len() - 1;
        ((t / self.dt()).round().max(0.0) as usize).min(m)
    }

    pub fn value_at_level(&self, k: usize, x: &[f64]) -> f64 {
        self.grid.interpolate_scalar(&self.values[k], x)
    }

    pub fn gradient_at_level(&self, k: usize, x: &[f64], out: &mut [f64]) {
        self.grid.interpolate(&self.gradients[k], self.grid.dim, x, out);
    }

    /// Multilinear in space, linear in time between levels.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let m = self.times.len() - 1;
        let pos = (t / self.dt()).clamp(0.0, m as f64);
        let k0 = (pos.floor() as usize).min(m.saturating_sub(1));
        let w = pos - k0 as f64;
        let v0 = self.value_at_level(k0, x);
        if w == 0.0 {
            v0
        } else {
            (1.0 - w) * v0 + w * self.value_at_level(k0 + 1, x)
        }
    }

    /// `max_k max |u| + max_{k >= 1} t_k^gamma max |Du|`.
    pub fn c1gamma_norm(&self, gamma_smooth: f64) -> f64 {
        let sup = self.values.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        sup + self.gradient_budget(gamma_smooth)
    }

    /// `max_{k >= 1} t_k^gamma max_node |Du(t_k, node)|`.
    pub fn gradient_budget(&self, gamma_smooth: f64) -> f64 {
        (1..self.times.len())
            .map(|k| self.times[k].powf(gamma_smooth) * self.max_gradient_norm(k))
            .fold(0.0, f64::max)
    }

    pub fn max_gradient_norm(&self, k: usize) -> f64 {
        self.gradients[k]
            .chunks(self.grid.dim)
            .map(norm)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HJBSolution {
    pub grid_fn: GridValueFunction,
    pub residual_history: Vec<f64>,
    pub c1gamma_norm: f64,
    pub mc: McSpec,
    pub options: HjbOptions,
    pub converged: bool,
    pub radius: f64,
    pub gamma_smooth: f64,
    pub hamiltonian_lipschitz: f64,
    /// Monte Carlo standard error of each node value, per level.
    pub std_errors: Vec<Vec<f64>>,
    /// Fraction of inner samples that landed outside the box.
    pub clipped_fraction: f64,
    pub schedule: String,
}

impl HJBSolution {
    pub fn horizon(&self) -> f64 {
        self.grid_fn.horizon()
    }

    pub fn sweeps(&self) -> usize {
        self.residual_history.len()
    }

    /// Largest ratio of consecutive residuals.
    pub fn contraction_factor(&self) -> f64 {
        self.residual_history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max)
    }

    pub fn max_std_error(&self) -> f64 {
        self.std_errors.iter().flatten().fold(0.0, |a: f64, v| a.max(*v))
    }

    /// Time-interpolated standard error at `x`.
    pub fn std_error_at(&self, t: f64, x: &[f64]) -> f64 {
        let g = &self.grid_fn;
        let k = g.nearest_level(t);
        g.grid.interpolate_scalar(&self.std_errors[k], x)
    }
}

/// Contraction factor of the fixed-point map as bounded in the existence
/// proof, with the unknown gradient constant set to 1.
pub fn analytic_contraction_factor(horizon: f64, gamma_smooth: f64, lipschitz: f64) -> f64 {
    horizon.powf(1.0 - gamma_smooth) / (1.0 - gamma_smooth) * lipschitz * (1.0 + 4f64.powf(gamma_smooth))
}

/// Frozen draws of `Z^0_{A,tau}` for every level pair `(k, j)` with
/// `tau = t_k - t_j > 0`.
struct SampleBank {
    n_mc: usize,
    /// Indexed by `pair_index(k, j)`; empty for `j == k`.
    draws: Vec<Vec<f64>>,
    factors: Vec<Vec<f64>>,
}

fn pair_index(k: usize, j: usize) -> usize {
    k * (k + 1) / 2 + j
}

impl SampleBank {
    fn draw(model: &SpectralModel, times: &[f64], n_mc: usize, rng: RngStream) -> Result<Self> {
        let m = times.len() - 1;
        let dim = model.n_modes();
        let pairs: Vec<(usize, usize)> = (0..=m).flat_map(|k| (0..=k).map(move |j| (k, j))).collect();
        let built: Vec<(Vec<f64>, Vec<f64>)> = pairs
            .par_iter()
            .map(|&(k, j)| {
                if j == k {
                    return Ok((Vec::new(), vec![1.0; dim]));
                }
                let law = OuMarginal::new(model, times[k] - times[j])?;
                let mut g = rng.substream2(k as u64, j as u64).generator();
                let mut out = vec![0.0; n_mc * dim];
                for chunk in out.chunks_mut(dim) {
                    law.sample_into(&mut g, chunk);
                }
                Ok((out, law.factors))
            })
            .collect::<Result<_>>()?;
        let (draws, factors) = built.into_iter().unzip();
        Ok(Self { n_mc, draws, factors })
    }
}

/// Solves the mild HJB equation by Picard iteration with frozen samples.
pub fn picard_solve(
    model: &SpectralModel,
    problem: &ProblemSpec,
    grid_spec: &GridSpec,
    mc: McSpec,
    options: &HjbOptions,
) -> Result<HJBSolution> {
    let dim = model.n_modes();
    if problem.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: problem.dim });
    }
    check_positive("tol", options.tol)?;
    if grid_spec.time_levels == 0 {
        return Err(Error::ParameterOutOfRange {
            name: "time_levels",
            value: 0.0,
            bound: "must be >= 1".into(),
        });
    }
    if mc.n_mc == 0 {
        return Err(Error::ParameterOutOfRange {
            name: "n_mc",
            value: 0.0,
            bound: "must be >= 1".into(),
        });
    }
    let grid = TensorGrid::new(dim, grid_spec.nodes_per_axis, grid_spec.half_width)?;
    let m = grid_spec.time_levels;
    let dt = problem.horizon / m as f64;
    let times: Vec<f64> = (0..=m).map(|k| k as f64 * dt).collect();
    let nodes = grid.nodes();
    let n_nodes = nodes.len();
    let rng = RngStream::new(mc.seed, 0x48_4a_42);
    let mut bank = SampleBank::draw(model, &times, mc.n_mc, rng)?;
    let weights: Vec<Vec<f64>> = (0..=m)
        .map(|k| options.time_rule.weights(k, dt, model.gamma_smooth))
        .collect();

    let h_values: Vec<f64> = nodes.iter().map(|x| problem.terminal_cost.eval(x)).collect();
    let mut values = vec![h_values.clone()];
    let mut base_se = vec![vec![0.0; n_nodes]];
    let mut clipped = Moments::default();
    for k in 1..=m {
        let (v, se) = base_level(&grid, &nodes, &bank, k, &h_values, &mut clipped);
        values.push(v);
        base_se.push(se);
    }
    let mut gradients: Vec<Vec<f64>> = values.iter().map(|v| grid.gradient(v)).collect();
    let mut base: Vec<Vec<f64>> = values.clone();
    let mut std_errors = base_se.clone();

    let mut residuals = Vec::new();
    let mut converged = false;
    let mut rising = 0;
    let mut clipped_fraction = clipped.mean;
    for sweep in 0..options.max_iter {
        if options.fresh_noise && sweep > 0 {
            bank = SampleBank::draw(model, &times, mc.n_mc, rng.substream(sweep as u64))?;
            let mut c = Moments::default();
            for k in 1..=m {
                let (v, se) = base_level(&grid, &nodes, &bank, k, &h_values, &mut c);
                base[k] = v;
                base_se[k] = se;
            }
        }
        let ctx = SweepContext {
            grid: &grid,
            nodes: &nodes,
            bank: &bank,
            weights: &weights,
            gradients: &gradients,
            problem,
            rule: options.time_rule,
        };
        let tasks: Vec<(usize, usize)> = (1..=m).flat_map(|k| (0..n_nodes).map(move |i| (k, i))).collect();
        let out: Vec<(f64, f64, u64, u64)> = tasks.par_iter().map(|&(k, i)| ctx.evaluate(k, i)).collect();

        let mut residual: f64 = 0.0;
        let (mut outside, mut total) = (0u64, 0u64);
        for (&(k, i), &(integral, var, o, t)) in tasks.iter().zip(&out) {
            let v = base[k][i] + integral;
            residual = residual.max((v - values[k][i]).abs());
            values[k][i] = v;
            std_errors[k][i] = (base_se[k][i].powi(2) + var).sqrt();
            outside += o;
            total += t;
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("HJB iterate became non-finite".into()));
        }
        if total > 0 {
            clipped_fraction = clipped_fraction.max(outside as f64 / total as f64);
        }
        for k in 1..=m {
            gradients[k] = grid.gradient(&values[k]);
        }
        if let Some(&last) = residuals.last() {
            rising = if residual >= last && residual > 0.0 { rising + 1 } else { 0 };
        }
        residuals.push(residual);
        if residual < options.tol {
            converged = true;
            break;
        }
        if rising >= 3 && !options.fresh_noise {
            let n = residuals.len();
            return Err(Error::HjbDivergence {
                empirical: residuals[n - 1] / residuals[n - 2],
                analytic_unit_c: analytic_contraction_factor(
                    problem.horizon,
                    model.gamma_smooth,
                    problem.hamiltonian_lipschitz(),
                ),
            });
        }
    }

    let grid_fn = GridValueFunction {
        grid,
        times,
        values,
        gradients,
    };
    Ok(HJBSolution {
        c1gamma_norm: grid_fn.c1gamma_norm(model.gamma_smooth),
        grid_fn,
        residual_history: residuals,
        mc,
        options: *options,
        converged,
        radius: problem.radius,
        gamma_smooth: model.gamma_smooth,
        hamiltonian_lipschitz: problem.hamiltonian_lipschitz(),
        std_errors,
        clipped_fraction,
        schedule: model.schedule.id().to_string(),
    })
}

/// `P_{t_k} h` at nodes from the `(k, 0)` draws.
fn base_level(
    grid: &TensorGrid,
    nodes: &[Vec<f64>],
    bank: &SampleBank,
    k: usize,
    h_values: &[f64],
    clipped: &mut Moments,
) -> (Vec<f64>, Vec<f64>) {
    let dim = grid.dim;
    let draws = &bank.draws[pair_index(k, 0)];
    let factors = &bank.factors[pair_index(k, 0)];
    let out: Vec<(Moments, u64)> = nodes
        .par_iter()
        .map(|x| {
            let mut y = vec![0.0; dim];
            let mut mom = Moments::default();
            let mut outside = 0;
            for xi in draws.chunks(dim) {
                for a in 0..dim {
                    y[a] = factors[a] * x[a] + xi[a];
                }
                if !grid.contains(&y) {
                    outside += 1;
                }
                mom.push(grid.interpolate_scalar(h_values, &y));
            }
            (mom, outside)
        })
        .collect();
    for (_, o) in &out {
        clipped.push(*o as f64 / bank.n_mc as f64);
    }
    out.into_iter().map(|(m, _)| (m.mean, m.std_error())).unzip()
}

struct SweepContext<'a> {
    grid: &'a TensorGrid,
    nodes: &'a [Vec<f64>],
    bank: &'a SampleBank,
    weights: &'a [Vec<f64>],
    gradients: &'a [Vec<f64>],
    problem: &'a ProblemSpec,
    rule: TimeRule,
}

impl SweepContext<'_> {
    /// Quadrature sum at `(level k, node i)`: value, variance, samples
    /// outside the box, samples drawn.
    fn evaluate(&self, k: usize, i: usize) -> (f64, f64, u64, u64) {
        let dim = self.grid.dim;
        let x = &self.nodes[i];
        let mut y = vec![0.0; dim];
        let mut p = vec![0.0; dim];
        let mut f = vec![0.0; dim];
        let (mut sum, mut var) = (0.0, 0.0);
        let (mut outside, mut total) = (0u64, 0u64);
        let first = match self.rule {
            TimeRule::SingularFirstCell => 1,
            TimeRule::Trapezoid => 0,
        };
        for j in first..=k {
            let w = self.weights[k][j];
            if w == 0.0 {
                continue;
            }
            if j == k {
                p.copy_from_slice(&self.gradients[k][i * dim..(i + 1) * dim]);
                sum += w * hamiltonian_with(x, &p, self.problem, &mut f);
                continue;
            }
            let idx = pair_index(k, j);
            let factors = &self.bank.factors[idx];
            let mut mom = Moments::default();
            for xi in self.bank.draws[idx].chunks(dim) {
                for a in 0..dim {
                    y[a] = factors[a] * x[a] + xi[a];
                }
                if !self.grid.contains(&y) {
                    outside += 1;
                }
                self.grid.interpolate(&self.gradients[j], dim, &y, &mut p);
                mom.push(hamiltonian_with(&y, &p, self.problem, &mut f));
            }
            total += self.bank.n_mc as u64;
            sum += w * mom.mean;
            let se = mom.std_error();
            var += w * w * se * se;
        }
        (sum, var, outside, total)
    }
}

/// Largest `|Du(t_k, x) - Du(t_k, y)| / |x - y|^theta` over node pairs,
/// subsampled to at most `10^5` pairs.
pub fn holder_seminorm(solution: &HJBSolution, level: usize, theta: f64) -> Result<f64> {
    let gamma = solution.gamma_smooth;
    if !(theta > 0.0 && theta < 1.0) || gamma + theta * gamma >= 1.0 {
        return Err(Error::ParameterOutOfRange {
            name: "theta",
            value: theta,
            bound: format!("need 0 < theta < 1 and gamma + theta * gamma < 1 with gamma = {gamma}"),
        });
    }
    let g = &solution.grid_fn;
    if level == 0 || level >= g.times.len() {
        return Err(Error::ParameterOutOfRange {
            name: "level",
            value: level as f64,
            bound: format!("must lie in 1..={}", g.times.len() - 1),
        });
    }
    if !solution.converged {
        return Err(Error::Domain("Hölder seminorm requires a converged solution".into()));
    }
    const MAX_PAIRS: usize = 100_000;
    let dim = g.grid.dim;
    let n = g.grid.len();
    let grads = &g.gradients[level];
    let nodes = g.grid.nodes();
    let quotient = |a: usize, b: usize| {
        let dx = norm_diff(&nodes[a], &nodes[b]);
        let dg = norm_diff(&grads[a * dim..(a + 1) * dim], &grads[b * dim..(b + 1) * dim]);
        dg / dx.powf(theta)
    };
    let total = n * (n - 1) / 2;
    let best = if total <= MAX_PAIRS {
        (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .map(|(a, b)| quotient(a, b))
            .fold(0.0, f64::max)
    } else {
        let mut rng = RngStream::new(solution.mc.seed, 0x401d).generator();
        let mut best: f64 = 0.0;
        // always include grid neighbours along every axis
        for a in 0..n {
            let mut multi = vec![0; dim];
            g.grid.multi_index(a, &mut multi);
            for ax in 0..dim {
                if multi[ax] + 1 < g.grid.nodes_per_axis {
                    multi[ax] += 1;
                    best = best.max(quotient(a, g.grid.flat_index(&multi)));
                    multi[ax] -= 1;
                }
            }
        }
        for _ in 0..MAX_PAIRS.saturating_sub(n * dim) {
            let pick = sample_indices(&mut rng, n, 2);
            best = best.max(quotient(pick.index(0), pick.index(1)));
        }
        best
    };
    Ok(best)
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamiltonian_is_continuous_at_the_seam() {
        assert_eq!(hamiltonian_inf(&[0.0, 0.0], 1.0), 0.0);
        assert!((hamiltonian_inf(&[0.6, 0.8], 1.0) + 0.5).abs() < 1e-15);
        assert!((hamiltonian_inf(&[3.0, 4.0], 1.0) + 4.5).abs() < 1e-15);
    }

    #[test]
    fn argmin_matches_infimum() {
        for p in [[0.3, 0.4], [3.0, 4.0], [0.0, 0.0], [-2.0, 0.1]] {
            let l = argmin_control(&p, 1.0);
            let obj: f64 = l.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() + 0.5 * norm(&l).powi(2);
            assert!((obj - hamiltonian_inf(&p, 1.0)).abs() < 1e-14);
            assert!(norm(&l) <= 1.0 + 1e-15);
        }
        assert_eq!(argmin_control(&[0.3, 0.4], 1.0), vec![-0.3, -0.4]);
    }

    #[test]
    fn weights_integrate_constants_except_first_cell() {
        let dt = 0.1;
        for k in 1..6 {
            let trap: f64 = TimeRule::Trapezoid.weights(k, dt, 0.7).iter().sum();
            assert!((trap - k as f64 * dt).abs() < 1e-14);
            let sing = TimeRule::SingularFirstCell.weights(k, dt, 0.7);
            assert_eq!(sing[0], 0.0);
            // s^-gamma profile integrated exactly on the first cell
            let want = dt / (2.0 - 0.7) + (k as f64 - 1.0) * dt;
            assert!((sing.iter().sum::<f64>() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn pair_indices_are_dense() {
        let mut seen = Vec::new();
        for k in 0..5 {
            for j in 0..=k {
                seen.push(pair_index(k, j));
            }
        }
        assert_eq!(seen, (0..15).collect::<Vec<_>>());
    }
}
