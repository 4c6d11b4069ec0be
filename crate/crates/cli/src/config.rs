//! Experiment configuration: TOML file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use levy_hjb::functions::{DriftPreset, FunctionPreset};
use levy_hjb::hjb::{GridSpec, HjbOptions, TensorGrid, TimeRule};
use levy_hjb::spectrum::{make_heat_dirichlet_model, BetaSchedule, SpectralModel};
use levy_hjb::state::{cell_count, ProblemSpec};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub problem: ProblemConfig,
    pub grid: GridSpec,
    pub mc: McConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_modes: usize,
    pub alpha: f64,
    pub gamma_smooth: f64,
    pub schedule: BetaSchedule,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub drift: DriftPreset,
    pub running_cost: FunctionPreset,
    pub terminal_cost: FunctionPreset,
    pub radius: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_mc: usize,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub theta: f64,
    pub time_rule: TimeRule,
    pub fresh_noise: bool,
    /// Re-solve with `2m - 1` nodes and record the change at the probes.
    pub refinement_check: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = HjbOptions::default();
        Self {
            tol: o.tol,
            max_iter: o.max_iter,
            theta: 0.3,
            time_rule: o.time_rule,
            fresh_noise: o.fresh_noise,
            refinement_check: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub alphas: Vec<f64>,
    pub h_values: Vec<f64>,
    pub ecf_samples: usize,
    pub semigroup_times: Vec<f64>,
    pub decay_t_min: f64,
    pub decay_points: usize,
    pub decay_steepness: f64,
    pub decay_probes: usize,
    pub decay_n_mc: usize,
    pub generator_t: f64,
    pub generator_samples: usize,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            alphas: vec![1.2, 1.5, 1.8],
            h_values: vec![0.5, 1.0, 2.0],
            ecf_samples: 1_000_000,
            semigroup_times: vec![0.0, 0.1, 0.25, 0.5],
            decay_t_min: 1e-3,
            decay_points: 8,
            decay_steepness: 50.0,
            decay_probes: 9,
            decay_n_mc: 100_000,
            generator_t: 1e-3,
            generator_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Each probe is `[t0, x_1, ..., x_N]`.
    pub probes: Vec<Vec<f64>>,
    /// Constants per axis in the comparison family.
    pub family_points: usize,
    /// Defaults to `horizon / 64`.
    pub path_step: Option<f64>,
    /// Paths per probe in the state-equation contraction table.
    pub contraction_paths: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            probes: vec![vec![0.0, 0.0]],
            family_points: 9,
            path_step: None,
            contraction_paths: 20,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// A probe split into its start time and point.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub t0: f64,
    pub x: Vec<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let model = self.model()?;
        self.problem()?;
        TensorGrid::new(self.model.n_modes, self.grid.nodes_per_axis, self.grid.half_width).map_err(config_err)?;
        if self.grid.time_levels == 0 {
            return Err(CliError::Config("grid.time_levels must be >= 1".into()));
        }
        let gamma = model.gamma_smooth;
        if !(self.solver.theta > 0.0 && gamma + self.solver.theta * gamma < 1.0) {
            return Err(CliError::Config(format!(
                "solver.theta = {} needs gamma + theta * gamma < 1",
                self.solver.theta
            )));
        }
        if self.mc.n_mc == 0 || self.mc.n_paths == 0 {
            return Err(CliError::Config("mc.n_mc and mc.n_paths must be >= 1".into()));
        }
        if self.verify.family_points == 0 {
            return Err(CliError::Config("verify.family_points must be >= 1".into()));
        }
        let step = self.path_step();
        for p in self.probes()? {
            cell_count(p.t0, self.problem.horizon, step)
                .map_err(|e| CliError::Config(format!("probe at t0 = {}: {e}", p.t0)))?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<SpectralModel, CliError> {
        let m = &self.model;
        make_heat_dirichlet_model(m.n_modes, m.alpha, m.gamma_smooth, m.schedule).map_err(config_err)
    }

    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        ProblemSpec::new(
            self.model.n_modes,
            Arc::new(p.drift.clone()),
            Arc::new(p.running_cost.clone()),
            Arc::new(p.terminal_cost.clone()),
            p.radius,
            p.horizon,
        )
        .map_err(config_err)
    }

    pub fn hjb_options(&self) -> HjbOptions {
        HjbOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            time_rule: self.solver.time_rule,
            fresh_noise: self.solver.fresh_noise,
        }
    }

    pub fn path_step(&self) -> f64 {
        self.verify.path_step.unwrap_or(self.problem.horizon / 64.0)
    }

    pub fn probes(&self) -> Result<Vec<Probe>, CliError> {
        let n = self.model.n_modes;
        self.verify
            .probes
            .iter()
            .map(|p| {
                if p.len() != n + 1 {
                    return Err(CliError::Config(format!(
                        "probe {p:?} must hold t0 followed by {n} coordinates"
                    )));
                }
                if !(0.0..self.problem.horizon).contains(&p[0]) {
                    return Err(CliError::Config(format!("probe time {} outside [0, T)", p[0])));
                }
                Ok(Probe {
                    t0: p[0],
                    x: p[1..].to_vec(),
                })
            })
            .collect()
    }
}

fn config_err(e: levy_hjb::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// `a.b.c=value`; the value is read as a TOML literal, falling back to a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = include_str!("../../../configs/desk.toml");

    #[test]
    fn desk_config_loads() {
        let c = ExperimentConfig::parse(DESK, &[]).unwrap();
        assert_eq!(c.grid.nodes_per_axis, 65);
        assert_eq!(c.probes().unwrap().len(), 5);
    }

    #[test]
    fn overrides_replace_nested_values() {
        let c = ExperimentConfig::parse(DESK, &["mc.seed=11".into(), "model.schedule=cylindrical".into()]).unwrap();
        assert_eq!(c.mc.seed, 11);
        assert_eq!(c.model.schedule, BetaSchedule::Cylindrical);
        let c = ExperimentConfig::parse(DESK, &["problem.drift={ kind = \"zero\" }".into()]).unwrap();
        assert_eq!(c.problem.drift, DriftPreset::Zero);
    }

    #[test]
    fn unknown_and_invalid_keys_are_config_errors() {
        for bad in ["mc.sed=1", "model.alpha=2.5", "solver.theta=0.99", "verify.path_step=0.3", "grid.nodes_per_axis=64"] {
            assert!(matches!(ExperimentConfig::parse(DESK, &[bad.into()]), Err(CliError::Config(_))), "{bad}");
        }
        assert!(matches!(ExperimentConfig::parse(DESK, &["novalue".into()]), Err(CliError::Config(_))));
    }
}
