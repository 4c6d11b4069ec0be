#![allow(dead_code)]

use std::sync::Arc;

use levy_hjb::functions::{DriftPreset, FunctionPreset};
use levy_hjb::hjb::{picard_solve, GridSpec, HJBSolution, HjbOptions, McSpec};
use levy_hjb::spectrum::{make_heat_dirichlet_model, BetaSchedule, SpectralModel};
use levy_hjb::state::ProblemSpec;

pub fn desk_model(n: usize) -> SpectralModel {
    make_heat_dirichlet_model(n, 1.5, 0.7, BetaSchedule::Critical).unwrap()
}

pub fn bump(dim: usize) -> FunctionPreset {
    let mut center = vec![0.0; dim];
    center[0] = 0.5;
    FunctionPreset::GaussianBump {
        amplitude: 1.0,
        width: 0.5,
        center,
    }
}

pub fn ramp() -> FunctionPreset {
    FunctionPreset::SmoothedRamp {
        low: -1.0,
        high: 1.0,
        width: 0.2,
    }
}

pub fn problem(dim: usize, drift: DriftPreset, g: FunctionPreset, h: FunctionPreset, radius: f64, horizon: f64) -> ProblemSpec {
    ProblemSpec::new(dim, Arc::new(drift), Arc::new(g), Arc::new(h), radius, horizon).unwrap()
}

pub fn desk_problem(dim: usize) -> ProblemSpec {
    problem(dim, DriftPreset::Tanh { scale: 0.25 }, bump(dim), ramp(), 1.0, 0.5)
}

/// Coarse version of the desk solve, quick enough for unit-level checks.
pub fn small_solution(model: &SpectralModel, problem: &ProblemSpec, m: usize, levels: usize, n_mc: usize) -> HJBSolution {
    picard_solve(
        model,
        problem,
        &GridSpec {
            half_width: 4.0,
            nodes_per_axis: m,
            time_levels: levels,
        },
        McSpec { n_mc, seed: 99 },
        &HjbOptions::default(),
    )
    .unwrap()
}
