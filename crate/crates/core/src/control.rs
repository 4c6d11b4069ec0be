//! Policy costs, value-function verification and brute-force search.
//!
//! For any admissible control the value function satisfies
//!
//! `u(T - t, x) = J(t, x, a) + E int_t^T [H_inf(Du) - |a|^2 / 2 - <Du, a>] ds`
//!
//! with `Du = Du(T - s, X_s)`. The bracket is nonpositive and vanishes for
//! the feedback `a = argmin_control(Du)`; both facts are checked here by
//! simulation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{hamiltonian_inf, HJBSolution};
use crate::mc::{map_chunks, reduce_moments, Estimate, Moments};
use crate::policy::Policy;
use crate::rng::RngStream;
use crate::spectrum::SpectralModel;
use crate::state::{norm, solve_state_path, PicardSpec, ProblemSpec, StatePath};

pub const BRACKET_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Fraction of path points outside the policy's grid box.
    pub clipped_fraction: f64,
}

/// Running cost by the trapezoid rule in time, control cost exactly for the
/// piecewise-constant control, plus the terminal cost.
pub fn path_cost(problem: &ProblemSpec, path: &StatePath) -> f64 {
    let n = path.times.len() - 1;
    let mut running = 0.0;
    let mut control = 0.0;
    for k in 0..n {
        let dt = path.times[k + 1] - path.times[k];
        running += 0.5 * dt * (problem.running_cost.eval(&path.states[k]) + problem.running_cost.eval(&path.states[k + 1]));
        control += 0.5 * dt * norm(&path.control_values[k]).powi(2);
    }
    running + control + problem.terminal_cost.eval(&path.states[n])
}

/// Time integral of the suboptimality bracket along a path, with `Du`
/// read off the solution exactly as the extracted feedback reads it.
pub fn path_bracket(solution: &HJBSolution, path: &StatePath) -> f64 {
    let g = &solution.grid_fn;
    let horizon = solution.horizon();
    let dim = g.grid.dim;
    let mut p = vec![0.0; dim];
    let mut total = 0.0;
    for k in 0..path.times.len() - 1 {
        let dt = path.times[k + 1] - path.times[k];
        let level = g.nearest_level(horizon - path.times[k]);
        g.gradient_at_level(level, &path.states[k], &mut p);
        let a = &path.control_values[k];
        let pa: f64 = p.iter().zip(a).map(|(x, y)| x * y).sum();
        total += dt * (hamiltonian_inf(&p, solution.radius) - 0.5 * norm(a).powi(2) - pa);
    }
    total
}

struct PathStats {
    cost: Moments,
    bracket: Moments,
    combined: Moments,
    outside: u64,
    points: u64,
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    model: &SpectralModel,
    problem: &ProblemSpec,
    policy: &dyn Policy,
    solution: Option<&HJBSolution>,
    t0: f64,
    x: &[f64],
    step: f64,
    n_paths: usize,
    rng: RngStream,
) -> Result<PathStats> {
    if n_paths == 0 {
        return Err(Error::ParameterOutOfRange {
            name: "n_paths",
            value: 0.0,
            bound: "must be >= 1".into(),
        });
    }
    let parts = map_chunks(n_paths, rng, |_, range| {
        let mut s = PathStats {
            cost: Moments::default(),
            bracket: Moments::default(),
            combined: Moments::default(),
            outside: 0,
            points: 0,
        };
        for i in range {
            let path = solve_state_path(model, problem, policy, t0, x, step, rng.substream2(u64::MAX, i as u64), PicardSpec::default())
                .map_err(|e| Error::Path { path: i, source: Box::new(e) })?;
            let c = path_cost(problem, &path);
            let b = solution.map_or(0.0, |sol| path_bracket(sol, &path));
            s.cost.push(c);
            s.bracket.push(b);
            s.combined.push(c + b);
            if let Some(grid) = policy.box_grid() {
                s.outside += path.states.iter().filter(|y| !grid.contains(y)).count() as u64;
            }
            s.points += path.states.len() as u64;
        }
        Ok(s)
    })?;
    let merge = |f: fn(&PathStats) -> Moments| reduce_moments(&parts.iter().map(f).collect::<Vec<_>>());
    Ok(PathStats {
        cost: merge(|p| p.cost),
        bracket: merge(|p| p.bracket),
        combined: merge(|p| p.combined),
        outside: parts.iter().map(|p| p.outside).sum(),
        points: parts.iter().map(|p| p.points).sum(),
    })
}

impl PathStats {
    fn cost_estimate(&self, n_paths: usize) -> CostEstimate {
        CostEstimate {
            mean: self.cost.mean,
            std_error: self.cost.std_error(),
            n_paths,
            clipped_fraction: if self.points == 0 {
                0.0
            } else {
                self.outside as f64 / self.points as f64
            },
        }
    }
}

/// Monte Carlo estimate of `J(t0, x, a)`. Path `i` always uses the same
/// noise substream of `rng`, so different policies share random numbers.
#[allow(clippy::too_many_arguments)]
pub fn cost_of_policy(
    model: &SpectralModel,
    problem: &ProblemSpec,
    policy: &dyn Policy,
    t0: f64,
    x: &[f64],
    step: f64,
    n_paths: usize,
    rng: RngStream,
) -> Result<CostEstimate> {
    Ok(simulate(model, problem, policy, None, t0, x, step, n_paths, rng)?.cost_estimate(n_paths))
}

/// Tolerance split for comparing the grid value with simulated costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBudget {
    /// Clipped fraction times the data bound `||g||_0 (T - t0) + ||h||_0`.
    pub clipping: f64,
    /// `max_{k >= 1} |Du(t_k)|` times the grid spacing.
    pub interpolation: f64,
    /// Bias of the singular first-cell weight for a bounded integrand.
    pub first_cell: f64,
    /// Three standard errors of the grid value at the probe.
    pub hjb_mc: f64,
}

impl GridBudget {
    pub fn total(&self) -> f64 {
        self.clipping + self.interpolation + self.first_cell + self.hjb_mc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalResidual {
    /// `u(T - t0, x)` interpolated from the solution.
    pub lhs: f64,
    pub rhs: CostEstimate,
    pub bracket: Estimate,
    /// Per-path `J + bracket`, whose mean should match `lhs`.
    pub combined: Estimate,
    pub budget: GridBudget,
}

impl FundamentalResidual {
    pub fn bracket_mean(&self) -> f64 {
        self.bracket.estimate
    }
}

pub fn grid_budget(problem: &ProblemSpec, solution: &HJBSolution, t0: f64, x: &[f64], path_clipped: f64) -> GridBudget {
    let g = &solution.grid_fn;
    let span = problem.horizon - t0;
    let data = problem.running_cost.bound().unwrap_or(0.0) * span + problem.terminal_cost.bound().unwrap_or(0.0);
    let max_grad = (1..g.times.len()).map(|k| g.max_gradient_norm(k)).fold(0.0, f64::max);
    let dt = g.dt();
    let gamma = solution.gamma_smooth;
    // sup over nodes of |H(x, Du(t_1, x))|, the first-cell integrand scale
    let dim = g.grid.dim;
    let h1 = g
        .grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| crate::hjb::hamiltonian_full(node, &g.gradients[1][i * dim..(i + 1) * dim], problem).abs())
        .fold(0.0, f64::max);
    GridBudget {
        clipping: solution.clipped_fraction.max(path_clipped) * data,
        interpolation: max_grad * g.grid.spacing(),
        first_cell: dt * (1.0 - gamma) / (2.0 - gamma) * h1,
        hjb_mc: 3.0 * solution.std_error_at(span, x),
    }
}

/// Value from the grid, simulated cost and simulated bracket at `(t0, x)`.
#[allow(clippy::too_many_arguments)]
pub fn fundamental_residual(
    model: &SpectralModel,
    problem: &ProblemSpec,
    solution: &HJBSolution,
    policy: &dyn Policy,
    t0: f64,
    x: &[f64],
    step: f64,
    n_paths: usize,
    rng: RngStream,
) -> Result<FundamentalResidual> {
    if !solution.converged {
        return Err(Error::Domain("verification requires a converged HJB solution".into()));
    }
    let stats = simulate(model, problem, policy, Some(solution), t0, x, step, n_paths, rng)?;
    let rhs = stats.cost_estimate(n_paths);
    Ok(FundamentalResidual {
        lhs: solution.grid_fn.value_at(problem.horizon - t0, x),
        rhs,
        bracket: stats.bracket.into(),
        combined: stats.combined.into(),
        budget: grid_budget(problem, solution, t0, x, rhs.clipped_fraction),
    })
}

/// Best policy of a finite family under common random numbers; ties go to
/// the lowest index. Also returns every member's cost.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_value(
    model: &SpectralModel,
    problem: &ProblemSpec,
    t0: f64,
    x: &[f64],
    family: &[&dyn Policy],
    step: f64,
    n_paths: usize,
    rng: RngStream,
) -> Result<(CostEstimate, usize, Vec<CostEstimate>)> {
    if family.is_empty() {
        return Err(Error::Domain("policy family is empty".into()));
    }
    let costs = family
        .iter()
        .map(|p| cost_of_policy(model, problem, *p, t0, x, step, n_paths, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if c.mean < costs[best].mean {
            best = i;
        }
    }
    Ok((costs[best], best, costs))
}

/// One row of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub policy: String,
    pub t0: f64,
    pub x: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub rhs_std_error: f64,
    pub bracket_mean: f64,
    pub bracket_std_error: f64,
    pub clipped_fraction: f64,
    pub grid_budget: f64,
}

impl VerificationRow {
    pub fn new(policy: String, t0: f64, x: &[f64], r: &FundamentalResidual) -> Self {
        Self {
            policy,
            t0,
            x: x.to_vec(),
            lhs: r.lhs,
            rhs: r.rhs.mean,
            rhs_std_error: r.rhs.std_error,
            bracket_mean: r.bracket.estimate,
            bracket_std_error: r.bracket.std_error,
            clipped_fraction: r.rhs.clipped_fraction,
            grid_budget: r.budget.total(),
        }
    }

    /// `u <= J + 3 se + budget`.
    pub fn dominance_holds(&self) -> bool {
        self.lhs <= self.rhs + 3.0 * self.rhs_std_error + self.grid_budget
    }

    /// `|u - J| <= 3 se + budget`.
    pub fn attainment_holds(&self) -> bool {
        (self.lhs - self.rhs).abs() <= 3.0 * self.rhs_std_error + self.grid_budget
    }

    /// `|bracket| <= 3 se`, with an absolute floor for roundoff when the
    /// bracket is zero on every path.
    pub fn bracket_vanishes(&self) -> bool {
        self.bracket_mean.abs() <= 3.0 * self.bracket_std_error + BRACKET_FLOOR
    }
}

/// RFC 4180 CSV; coordinates are joined with `;` inside one field.
pub fn write_verification_csv<W: Write>(rows: &[VerificationRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "policy,t0,x,lhs,rhs,rhs_std_error,bracket_mean,bracket_std_error,clipped_fraction,grid_budget,dominance"
    )?;
    for r in rows {
        let x: Vec<String> = r.x.iter().map(|v| format!("{v}")).collect();
        writeln!(
            w,
            "\"{}\",{},{},{},{},{},{},{},{},{},{}",
            r.policy.replace('"', "\"\""),
            r.t0,
            x.join(";"),
            r.lhs,
            r.rhs,
            r.rhs_std_error,
            r.bracket_mean,
            r.bracket_std_error,
            r.clipped_fraction,
            r.grid_budget,
            if r.dominance_holds() { "pass" } else { "fail" }
        )?;
    }
    Ok(())
}
