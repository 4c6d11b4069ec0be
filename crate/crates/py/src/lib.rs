use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

use ::levy_hjb as core;
use core::functions::{DriftPreset, FunctionPreset, TestFunction};
use core::hjb::{GridSpec, HJBSolution, HjbOptions, McSpec};
use core::policy::{FeedbackPolicy, Policy};
use core::spectrum::BetaSchedule;
use core::state::{PicardSpec, ProblemSpec};
use core::RngStream;

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::HjbDivergence { .. } | core::Error::NonContraction { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Presets arrive as plain dicts such as `{"kind": "tanh", "scale": 0.25}`.
fn from_dict<T: serde::de::DeserializeOwned>(py: Python<'_>, d: &Bound<'_, PyDict>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "SpectralModel", frozen)]
#[derive(Clone)]
struct PySpectralModel {
    inner: core::spectrum::SpectralModel,
}

#[pymethods]
impl PySpectralModel {
    /// Heat-semigroup model on the first `n_modes` Dirichlet modes.
    #[new]
    #[pyo3(signature = (n_modes, alpha, gamma_smooth, schedule = "critical"))]
    fn new(n_modes: usize, alpha: f64, gamma_smooth: f64, schedule: &str) -> PyResult<Self> {
        let s: BetaSchedule = schedule.parse().map_err(err)?;
        let inner = core::spectrum::make_heat_dirichlet_model(n_modes, alpha, gamma_smooth, s).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn gammas(&self) -> Vec<f64> {
        self.inner.gammas.clone()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.inner.betas.clone()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn gamma_smooth(&self) -> f64 {
        self.inner.gamma_smooth
    }

    fn semigroup_factor(&self, t: f64) -> PyResult<Vec<f64>> {
        self.inner.semigroup_factor(t).map_err(err)
    }

    #[pyo3(signature = (tail_terms = 100))]
    fn validate_hypothesis<'py>(&self, py: Python<'py>, tail_terms: usize) -> PyResult<Bound<'py, PyDict>> {
        let r = core::spectrum::validate_hypothesis(&self.inner, tail_terms).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("pointwise_ok", r.pointwise_ok)?;
        d.set_item("first_violation", r.first_violation)?;
        d.set_item("series_partial", r.series_partial)?;
        d.set_item("tail_bound", r.tail_bound)?;
        d.set_item("series_converges", r.series_converges)?;
        Ok(d)
    }

    /// Monte Carlo `P_t phi(x)` as `(estimate, std_error)`.
    #[pyo3(signature = (phi, t, x, n_mc, seed = 0))]
    fn semigroup_apply(
        &self,
        py: Python<'_>,
        phi: &Bound<'_, PyDict>,
        t: f64,
        x: Vec<f64>,
        n_mc: usize,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        let phi: FunctionPreset = from_dict(py, phi)?;
        let model = &self.inner;
        let e = py
            .allow_threads(|| core::ou::semigroup_apply(model, &phi, t, &x, n_mc, RngStream::from_seed(seed)))
            .map_err(err)?;
        Ok((e.estimate, e.std_error))
    }

    fn generator_apply(&self, py: Python<'_>, phi: &Bound<'_, PyDict>, x: Vec<f64>) -> PyResult<f64> {
        let phi: FunctionPreset = from_dict(py, phi)?;
        let j_max = self.inner.n_modes();
        core::ou::generator_apply(&self.inner, &phi, &x, j_max, &core::quad::QuadSpec::default()).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SpectralModel(n_modes={}, alpha={}, gamma_smooth={})",
            self.inner.n_modes(),
            self.inner.alpha,
            self.inner.gamma_smooth
        )
    }
}

#[pyclass(name = "Problem", frozen)]
#[derive(Clone)]
struct PyProblem {
    inner: ProblemSpec,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(
        py: Python<'_>,
        dim: usize,
        drift: &Bound<'_, PyDict>,
        running_cost: &Bound<'_, PyDict>,
        terminal_cost: &Bound<'_, PyDict>,
        radius: f64,
        horizon: f64,
    ) -> PyResult<Self> {
        let drift: DriftPreset = from_dict(py, drift)?;
        let g: FunctionPreset = from_dict(py, running_cost)?;
        let h: FunctionPreset = from_dict(py, terminal_cost)?;
        let inner = ProblemSpec::new(dim, Arc::new(drift), Arc::new(g), Arc::new(h), radius, horizon).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    fn running_cost(&self, x: Vec<f64>) -> f64 {
        self.inner.running_cost.eval(&x)
    }

    fn terminal_cost(&self, x: Vec<f64>) -> f64 {
        self.inner.terminal_cost.eval(&x)
    }
}

#[pyclass(name = "HJBSolution", frozen)]
struct PyHJBSolution {
    inner: Arc<HJBSolution>,
}

#[pymethods]
impl PyHJBSolution {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn residual_history(&self) -> Vec<f64> {
        self.inner.residual_history.clone()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.grid_fn.times.clone()
    }

    #[getter]
    fn clipped_fraction(&self) -> f64 {
        self.inner.clipped_fraction
    }

    fn contraction_factor(&self) -> f64 {
        self.inner.contraction_factor()
    }

    /// Value at time-to-go `t` (level 0 is the terminal cost), linear in time between levels.
    fn value_at(&self, t: f64, x: Vec<f64>) -> f64 {
        self.inner.grid_fn.value_at(t, &x)
    }

    fn gradient_at_level(&self, level: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if level >= self.inner.grid_fn.times.len() {
            return Err(PyValueError::new_err(format!("level {level} out of range")));
        }
        let mut out = vec![0.0; x.len()];
        self.inner.grid_fn.gradient_at_level(level, &x, &mut out);
        Ok(out)
    }

    /// Node values at one level, flattened in row-major node order.
    fn level_values(&self, level: usize) -> PyResult<Vec<f64>> {
        self.inner
            .grid_fn
            .values
            .get(level)
            .cloned()
            .ok_or_else(|| PyValueError::new_err(format!("level {level} out of range")))
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        self.inner.grid_fn.grid.nodes()
    }

    fn holder_seminorm(&self, level: usize, theta: f64) -> PyResult<f64> {
        core::hjb::holder_seminorm(&self.inner, level, theta).map_err(err)
    }

    /// Control chosen by the extracted feedback at time `s` and state `x`.
    fn feedback(&self, s: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let fb = core::policy::extract_feedback(self.inner.clone()).map_err(err)?;
        let mut out = vec![0.0; x.len()];
        fb.control(s, &x, &mut out).map_err(err)?;
        Ok(out)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(HJBSolution::load(path).map_err(err)?),
        })
    }
}

/// Max error of the empirical characteristic function of standard draws.
#[pyfunction]
#[pyo3(signature = (alpha, h_values, n_samples, seed = 0))]
fn ecf_max_error(py: Python<'_>, alpha: f64, h_values: Vec<f64>, n_samples: usize, seed: u64) -> PyResult<f64> {
    let r = py
        .allow_threads(|| core::stable::ecf_check(alpha, &h_values, n_samples, RngStream::from_seed(seed)))
        .map_err(err)?;
    Ok(r.max_abs_error)
}

#[pyfunction]
fn levy_constant(alpha: f64) -> PyResult<f64> {
    core::stable::levy_constant(alpha).map_err(err)
}

#[pyfunction]
fn kernel_scale(gamma_n: f64, beta_n: f64, alpha: f64, t: f64) -> PyResult<f64> {
    core::stable::kernel_scale(gamma_n, beta_n, alpha, t).map_err(err)
}

#[pyfunction]
fn hamiltonian(p: Vec<f64>, radius: f64) -> f64 {
    core::hjb::hamiltonian_inf(&p, radius)
}

#[pyfunction]
#[pyo3(signature = (model, problem, half_width, nodes_per_axis, time_levels, n_mc, seed = 0, tol = 1e-4, max_iter = 25))]
#[allow(clippy::too_many_arguments)]
fn solve_hjb(
    py: Python<'_>,
    model: &PySpectralModel,
    problem: &PyProblem,
    half_width: f64,
    nodes_per_axis: usize,
    time_levels: usize,
    n_mc: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyHJBSolution> {
    let grid = GridSpec {
        half_width,
        nodes_per_axis,
        time_levels,
    };
    let opts = HjbOptions {
        tol,
        max_iter,
        ..HjbOptions::default()
    };
    let (m, p) = (&model.inner, &problem.inner);
    let sol = py
        .allow_threads(|| core::hjb::picard_solve(m, p, &grid, McSpec { n_mc, seed }, &opts))
        .map_err(err)?;
    Ok(PyHJBSolution { inner: Arc::new(sol) })
}

/// Monte Carlo cost of a constant control, `(mean, std_error)`.
#[pyfunction]
#[pyo3(signature = (model, problem, control, t0, x, step, n_paths, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn constant_policy_cost(
    py: Python<'_>,
    model: &PySpectralModel,
    problem: &PyProblem,
    control: Vec<f64>,
    t0: f64,
    x: Vec<f64>,
    step: f64,
    n_paths: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let policy = FeedbackPolicy::constant(control);
    let (m, p) = (&model.inner, &problem.inner);
    let c = py
        .allow_threads(|| core::control::cost_of_policy(m, p, &policy, t0, &x, step, n_paths, RngStream::from_seed(seed)))
        .map_err(err)?;
    Ok((c.mean, c.std_error))
}

/// Value from the grid against the simulated cost of the extracted feedback.
#[pyfunction]
#[pyo3(signature = (model, problem, solution, t0, x, step, n_paths, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn verify_feedback<'py>(
    py: Python<'py>,
    model: &PySpectralModel,
    problem: &PyProblem,
    solution: &PyHJBSolution,
    t0: f64,
    x: Vec<f64>,
    step: f64,
    n_paths: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let fb = core::policy::extract_feedback(solution.inner.clone()).map_err(err)?;
    let (m, p, s) = (&model.inner, &problem.inner, &solution.inner);
    let r = py
        .allow_threads(|| core::control::fundamental_residual(m, p, s, &fb, t0, &x, step, n_paths, RngStream::from_seed(seed)))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("lhs", r.lhs)?;
    d.set_item("rhs", r.rhs.mean)?;
    d.set_item("rhs_std_error", r.rhs.std_error)?;
    d.set_item("bracket_mean", r.bracket.estimate)?;
    d.set_item("bracket_std_error", r.bracket.std_error)?;
    d.set_item("grid_budget", r.budget.total())?;
    Ok(d)
}

/// One state path under a constant control: `(times, states)`.
#[pyfunction]
#[pyo3(signature = (model, problem, control, t0, x, step, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn state_path(
    model: &PySpectralModel,
    problem: &PyProblem,
    control: Vec<f64>,
    t0: f64,
    x: Vec<f64>,
    step: f64,
    seed: u64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let policy = FeedbackPolicy::constant(control);
    let path = core::state::solve_state_path(
        &model.inner,
        &problem.inner,
        &policy,
        t0,
        &x,
        step,
        RngStream::from_seed(seed),
        PicardSpec::default(),
    )
    .map_err(err)?;
    Ok((path.times, path.states))
}

#[pymodule]
fn levy_hjb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpectralModel>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyHJBSolution>()?;
    m.add_function(wrap_pyfunction!(ecf_max_error, m)?)?;
    m.add_function(wrap_pyfunction!(levy_constant, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_scale, m)?)?;
    m.add_function(wrap_pyfunction!(hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(solve_hjb, m)?)?;
    m.add_function(wrap_pyfunction!(constant_policy_cost, m)?)?;
    m.add_function(wrap_pyfunction!(verify_feedback, m)?)?;
    m.add_function(wrap_pyfunction!(state_path, m)?)?;
    Ok(())
}
